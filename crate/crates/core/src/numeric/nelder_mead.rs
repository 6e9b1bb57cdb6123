//! Derivative-free downhill simplex with bound clamping.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Initial edge length per coordinate, as a fraction of the box width.
    pub initial_step: f64,
    /// Stop when the spread of vertex values falls below this.
    pub value_tolerance: f64,
    /// Stop when every vertex lies within this distance of the best.
    pub step_tolerance: f64,
    pub max_evaluations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { initial_step: 0.05, value_tolerance: 1e-14, step_tolerance: 1e-12, max_evaluations: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Best value after each iteration.
    pub history: Vec<f64>,
}

/// Minimises `f` over `[lower, upper]` starting from `x0`.
///
/// Infeasible points may return `f64::INFINITY`; they are simply ranked last.
/// `batch` evaluates several points at once so callers can parallelise the
/// initial simplex and shrink steps.
pub fn minimize<F>(f: F, x0: &[f64], lower: &[f64], upper: &[f64], options: &SimplexOptions) -> SimplexResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    minimize_batched(|pts: &[Vec<f64>]| pts.iter().map(|p| f(p)).collect(), x0, lower, upper, options)
}

pub fn minimize_batched<B>(batch: B, x0: &[f64], lower: &[f64], upper: &[f64], options: &SimplexOptions) -> SimplexResult
where
    B: Fn(&[Vec<f64>]) -> Vec<f64>,
{
    let n = x0.len();
    let clamp = |mut v: Vec<f64>| -> Vec<f64> {
        for i in 0..n {
            v[i] = v[i].clamp(lower[i], upper[i]);
        }
        v
    };
    let mut evaluations = 0;
    let eval = |pts: Vec<Vec<f64>>, evaluations: &mut usize| -> Vec<(Vec<f64>, f64)> {
        *evaluations += pts.len();
        let values = batch(&pts);
        pts.into_iter().zip(values).collect()
    };

    let mut initial = vec![clamp(x0.to_vec())];
    for i in 0..n {
        let width = upper[i] - lower[i];
        let h = options.initial_step * if width.is_finite() { width } else { x0[i].abs().max(1.0) };
        let mut v = initial[0].clone();
        v[i] = if v[i] + h <= upper[i] { v[i] + h } else { v[i] - h };
        initial.push(clamp(v));
    }
    let mut simplex = eval(initial, &mut evaluations);
    let mut history = Vec::new();
    let mut converged = false;

    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    while evaluations < options.max_evaluations {
        order(&mut simplex);
        history.push(simplex[0].1);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread_ok = worst.is_finite() && (worst - best).abs() <= options.value_tolerance;
        let size = simplex[1..]
            .iter()
            .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread_ok || size <= options.step_tolerance {
            converged = true;
            break;
        }
        let centroid: Vec<f64> =
            (0..n).map(|i| simplex[..n].iter().map(|(v, _)| v[i]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            clamp((0..n).map(|i| centroid[i] + t * (simplex[n].0[i] - centroid[i])).collect())
        };
        let reflected = eval(vec![along(-1.0)], &mut evaluations).pop().unwrap();
        if reflected.1 < simplex[0].1 {
            let expanded = eval(vec![along(-2.0)], &mut evaluations).pop().unwrap();
            simplex[n] = if expanded.1 < reflected.1 { expanded } else { reflected };
        } else if reflected.1 < simplex[n - 1].1 {
            simplex[n] = reflected;
        } else {
            let t = if reflected.1 < simplex[n].1 { -0.5 } else { 0.5 };
            let contracted = eval(vec![along(t)], &mut evaluations).pop().unwrap();
            if contracted.1 < simplex[n].1.min(reflected.1) {
                simplex[n] = contracted;
            } else {
                let x_best = simplex[0].0.clone();
                let shrunk: Vec<Vec<f64>> = simplex[1..]
                    .iter()
                    .map(|(v, _)| clamp((0..n).map(|i| x_best[i] + 0.5 * (v[i] - x_best[i])).collect()))
                    .collect();
                let new = eval(shrunk, &mut evaluations);
                for (k, vertex) in new.into_iter().enumerate() {
                    simplex[k + 1] = vertex;
                }
            }
        }
    }
    order(&mut simplex);
    let (x, value) = simplex.swap_remove(0);
    SimplexResult { x, value, evaluations, converged, history }
}
