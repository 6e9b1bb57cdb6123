//! Projected limited-memory BFGS for box-constrained minimisation.
//!
//! The quasi-Newton direction is built by the two-loop recursion over the
//! variables not pinned at a bound, and every trial point is projected back
//! into the box before the Armijo test.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsbOptions {
    /// Correction pairs kept.
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the projected gradient's max-norm falls below this.
    pub gradient_tolerance: f64,
    /// Stop when the relative decrease (f_k − f_{k+1})/max(|f_k|, |f_{k+1}|, 1)
    /// falls below this.
    pub relative_decrease: f64,
    /// Stop when the objective drops below this value.
    pub target: f64,
}

impl Default for LbfgsbOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 1000,
            gradient_tolerance: 1e-12,
            relative_decrease: 1e-15,
            target: f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Decrease,
    Target,
    Iterations,
    LineSearch,
    Budget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..x.len() {
        let step = (x[i] - g[i]).clamp(lower[i], upper[i]) - x[i];
        m = m.max(step.abs());
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `f` over the box `[lower, upper]`.
///
/// `f(x, grad)` returns the objective and writes its gradient. At most
/// `max_evaluations` calls are made.
pub fn minimize<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    options: &LbfgsbOptions,
    max_evaluations: usize,
) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(options.memory);
    let mut termination = Termination::Iterations;
    let mut iterations = 0;

    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    while iterations < options.max_iterations {
        if fx <= options.target {
            termination = Termination::Target;
            break;
        }
        if projected_gradient_norm(&x, &g, lower, upper) <= options.gradient_tolerance {
            termination = Termination::Gradient;
            break;
        }
        if evaluations >= max_evaluations {
            termination = Termination::Budget;
            break;
        }
        iterations += 1;

        // variables pinned at a bound by a gradient pushing outwards
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        let masked = |v: &[f64]| -> Vec<f64> { v.iter().zip(&free).map(|(a, &m)| if m { *a } else { 0.0 }).collect() };

        let mut q = masked(&g);
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(&masked(s), &q);
            for i in 0..n {
                if free[i] {
                    q[i] -= a * y[i];
                }
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let (sm, ym) = (masked(s), masked(y));
            let yy = dot(&ym, &ym);
            let gamma = if yy > 0.0 { dot(&sm, &ym) / yy } else { 1.0 };
            if gamma > 0.0 && gamma.is_finite() {
                q.iter_mut().for_each(|v| *v *= gamma);
            }
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(&masked(y), &q);
            for i in 0..n {
                if free[i] {
                    q[i] += s[i] * (a - b);
                }
            }
        }
        let mut d: Vec<f64> = q.iter().zip(&free).map(|(v, &m)| if m { -v } else { 0.0 }).collect();
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().zip(&free).map(|(v, &m)| if m { -v } else { 0.0 }).collect();
            slope = dot(&d, &g);
            if !(slope < 0.0) {
                termination = Termination::Gradient;
                break;
            }
        }
        // first step of a fresh history is scaled to unit length
        let mut step = if history.is_empty() {
            let norm = dot(&d, &d).sqrt();
            (1.0 / norm).min(1.0)
        } else {
            1.0
        };

        let mut accepted = false;
        let mut f_new = fx;
        while step > 1e-20 && evaluations < max_evaluations {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            project(&mut x_new, lower, upper);
            f_new = f(&x_new, &mut g_new);
            evaluations += 1;
            let actual: f64 = (0..n).map(|i| g[i] * (x_new[i] - x[i])).sum();
            if f_new.is_finite() && f_new <= fx + 1e-4 * actual.min(0.0) {
                accepted = true;
                break;
            }
            step *= if f_new.is_finite() { 0.5 } else { 0.1 };
        }
        if !accepted {
            termination = if evaluations >= max_evaluations { Termination::Budget } else { Termination::LineSearch };
            break;
        }
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 && sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == options.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = (fx - f_new) / fx.abs().max(f_new.abs()).max(1.0);
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if decrease <= options.relative_decrease {
            termination = Termination::Decrease;
            break;
        }
    }
    Minimum { x, value: fx, iterations, evaluations, termination }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let m = minimize(rosenbrock, &[-1.2, 1.0], &[-10.0; 2], &[10.0; 2], &LbfgsbOptions::default(), 10_000);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn active_bound() {
        // minimum of the unconstrained problem lies outside the box
        let m = minimize(rosenbrock, &[0.0, 0.0], &[-2.0, -2.0], &[0.5, 2.0], &LbfgsbOptions::default(), 10_000);
        assert!((m.x[0] - 0.5).abs() < 1e-9);
        assert!((m.x[1] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn quadratic_with_bounds_on_both_sides() {
        let c = [3.0, -4.0, 0.2];
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..3 {
                g[i] = 2.0 * (i as f64 + 1.0) * (x[i] - c[i]);
                v += (i as f64 + 1.0) * (x[i] - c[i]).powi(2);
            }
            v
        };
        let m = minimize(f, &[0.0; 3], &[-1.0; 3], &[1.0; 3], &LbfgsbOptions::default(), 1000);
        assert_eq!(m.x[0], 1.0);
        assert_eq!(m.x[1], -1.0);
        assert!((m.x[2] - 0.2).abs() < 1e-9);
    }

    #[test]
    fn budget_is_respected() {
        let mut calls = 0;
        let m = minimize(
            |x, g| {
                calls += 1;
                rosenbrock(x, g)
            },
            &[-1.2, 1.0],
            &[-10.0; 2],
            &[10.0; 2],
            &LbfgsbOptions::default(),
            15,
        );
        assert!(m.evaluations <= 15);
        assert_eq!(calls, m.evaluations);
    }
}
