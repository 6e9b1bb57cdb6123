//! Levenberg–Marquardt for small, box-constrained least-squares problems.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevenbergOptions {
    pub max_iterations: usize,
    /// Relative finite-difference step for the Jacobian.
    pub fd_step: f64,
    /// Stop once ‖r‖² is below this.
    pub target: f64,
    /// Residual evaluations allowed in total.
    pub max_evaluations: usize,
}

impl Default for LevenbergOptions {
    fn default() -> Self {
        Self { max_iterations: 200, fd_step: 1e-7, target: 0.0, max_evaluations: usize::MAX }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub x: Vec<f64>,
    /// ‖r(x)‖².
    pub value: f64,
    pub evaluations: usize,
}

/// Minimises ‖r(x)‖² over `[lower, upper]` with a central-difference Jacobian.
pub fn minimize<R>(residuals: R, x0: &[f64], lower: &[f64], upper: &[f64], options: &LevenbergOptions) -> LeastSquares
where
    R: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let clamp = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = x0.to_vec();
    clamp(&mut x);
    let mut r = DVector::from_vec(residuals(&x));
    let mut value = r.norm_squared();
    let mut evaluations = 1;
    let mut lambda = 1e-3;
    for _ in 0..options.max_iterations {
        if value <= options.target || !value.is_finite() || evaluations + 2 * n + 1 > options.max_evaluations {
            break;
        }
        let m = r.len();
        let mut jac = DMatrix::zeros(m, n);
        for i in 0..n {
            let h = options.fd_step * x[i].abs().max(1e-3 * (upper[i] - lower[i]).abs().min(1.0)).max(1e-12);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] = (x[i] + h).min(upper[i]);
            xm[i] = (x[i] - h).max(lower[i]);
            let span = xp[i] - xm[i];
            if span <= 0.0 {
                continue;
            }
            let rp = DVector::from_vec(residuals(&xp));
            let rm = DVector::from_vec(residuals(&xm));
            evaluations += 2;
            jac.set_column(i, &((rp - rm) / span));
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..30 {
            if evaluations >= options.max_evaluations {
                break;
            }
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = (0..n).map(|i| x[i] + step[i]).collect();
            clamp(&mut trial);
            let rt = DVector::from_vec(residuals(&trial));
            evaluations += 1;
            let vt = rt.norm_squared();
            if vt < value {
                x = trial;
                r = rt;
                value = vt;
                lambda = (lambda * 0.3).max(1e-15);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    LeastSquares { x, value, evaluations }
}
