//! Integer least squares: min over integer δ of ‖A δ − b‖.
//!
//! The column lattice of A is LLL-reduced, then a Schnorr–Euchner
//! depth-first search enumerates the closest lattice points.

use nalgebra::{DMatrix, DVector};

/// LLL-reduces the columns of `basis` in place and returns the unimodular
/// transform `u` with `reduced = original · u`.
pub fn lll_reduce(basis: &mut DMatrix<f64>, delta: f64) -> DMatrix<i64> {
    let n = basis.ncols();
    let mut u = DMatrix::<i64>::identity(n, n);
    if n == 0 {
        return u;
    }
    let gram_schmidt = |b: &DMatrix<f64>| -> (DMatrix<f64>, Vec<f64>) {
        let mut mu = DMatrix::zeros(n, n);
        let mut star: Vec<DVector<f64>> = Vec::with_capacity(n);
        let mut norms = Vec::with_capacity(n);
        for i in 0..n {
            let mut v = b.column(i).into_owned();
            for j in 0..i {
                let m = if norms[j] > 0.0 { b.column(i).dot(&star[j]) / norms[j] } else { 0.0 };
                mu[(i, j)] = m;
                v -= &star[j] * m;
            }
            norms.push(v.norm_squared());
            star.push(v);
        }
        (mu, norms)
    };
    let (mut mu, mut norms) = gram_schmidt(basis);
    let mut k = 1;
    let mut guard = 0usize;
    while k < n && guard < 100_000 {
        guard += 1;
        for j in (0..k).rev() {
            let q = mu[(k, j)].round();
            if q != 0.0 {
                let bj = basis.column(j).into_owned();
                let mut bk = basis.column_mut(k);
                bk -= bj * q;
                let uj = u.column(j).into_owned();
                let mut uk = u.column_mut(k);
                uk -= uj * (q as i64);
                for l in 0..=j {
                    let m = if l == j { 1.0 } else { mu[(j, l)] };
                    mu[(k, l)] -= q * m;
                }
            }
        }
        if norms[k] >= (delta - mu[(k, k - 1)].powi(2)) * norms[k - 1] {
            k += 1;
        } else {
            basis.swap_columns(k, k - 1);
            u.swap_columns(k, k - 1);
            let (m2, n2) = gram_schmidt(basis);
            mu = m2;
            norms = n2;
            k = (k - 1).max(1);
        }
    }
    u
}

/// Up to `keep` integer vectors δ with the smallest ‖A δ − b‖, best first.
///
/// `A` must have full column rank. At most `node_budget` search nodes are
/// visited; the Babai point is always among the results.
pub fn closest_vectors(a: &DMatrix<f64>, b: &DVector<f64>, keep: usize, node_budget: usize) -> Vec<(Vec<i64>, f64)> {
    let n = a.ncols();
    if n == 0 {
        return vec![(Vec::new(), b.norm())];
    }
    let mut reduced = a.clone();
    let u = lll_reduce(&mut reduced, 0.99);
    let qr = reduced.clone().qr();
    let r = qr.r();
    let y = qr.q().transpose() * b;
    let residual_floor = (b.norm_squared() - y.norm_squared()).max(0.0);

    let mut search = Search {
        r: &r,
        y: &y,
        keep: keep.max(1),
        budget: node_budget,
        nodes: 0,
        best: Vec::new(),
        w: vec![0i64; n],
    };
    // Babai point seeds the radius
    let mut babai = vec![0i64; n];
    let mut dist = 0.0;
    for k in (0..n).rev() {
        let c = (y[k] - ((k + 1)..n).map(|j| r[(k, j)] * babai[j] as f64).sum::<f64>()) / r[(k, k)];
        babai[k] = c.round() as i64;
        dist += (r[(k, k)] * (babai[k] as f64 - c)).powi(2);
    }
    search.best.push((babai.clone(), dist));
    search.descend(n - 1, 0.0);

    let mut out: Vec<(Vec<i64>, f64)> = search
        .best
        .into_iter()
        .map(|(w, d)| {
            let delta: Vec<i64> = (0..n).map(|i| (0..n).map(|j| u[(i, j)] * w[j]).sum()).collect();
            (delta, (d + residual_floor).sqrt())
        })
        .collect();
    out.sort_by(|p, q| p.1.total_cmp(&q.1));
    out.dedup_by(|p, q| p.0 == q.0);
    out
}

struct Search<'a> {
    r: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    keep: usize,
    budget: usize,
    nodes: usize,
    best: Vec<(Vec<i64>, f64)>,
    w: Vec<i64>,
}

impl Search<'_> {
    fn radius(&self) -> f64 {
        if self.best.len() < self.keep {
            // allow some slack beyond the Babai distance until the list fills
            self.best.iter().map(|b| b.1).fold(0.0, f64::max) * 4.0 + 1e-300
        } else {
            self.best.iter().map(|b| b.1).fold(0.0, f64::max)
        }
    }

    fn record(&mut self, d: f64) {
        if self.best.iter().any(|(w, _)| *w == self.w) {
            return;
        }
        self.best.push((self.w.clone(), d));
        if self.best.len() > self.keep {
            let worst = self
                .best
                .iter()
                .enumerate()
                .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                .map(|(i, _)| i)
                .unwrap();
            self.best.swap_remove(worst);
        }
    }

    fn descend(&mut self, k: usize, partial: f64) {
        let n = self.w.len();
        let rkk = self.r[(k, k)];
        let c = (self.y[k] - ((k + 1)..n).map(|j| self.r[(k, j)] * self.w[j] as f64).sum::<f64>()) / rkk;
        let centre = c.round() as i64;
        let (mut up, mut down) = (centre, centre - 1);
        let (mut up_open, mut down_open) = (true, true);
        // visit candidates in order of distance from c, one side closing at a time
        while up_open || down_open {
            if self.nodes >= self.budget {
                return;
            }
            let take_up = up_open && (!down_open || (up as f64 - c).abs() <= (c - down as f64).abs());
            let candidate = if take_up { up } else { down };
            let d = partial + (rkk * (candidate as f64 - c)).powi(2);
            if d > self.radius() {
                if take_up {
                    up_open = false;
                } else {
                    down_open = false;
                }
                continue;
            }
            if take_up {
                up += 1;
            } else {
                down -= 1;
            }
            self.nodes += 1;
            self.w[k] = candidate;
            if k == 0 {
                self.record(d);
            } else {
                self.descend(k - 1, d);
            }
        }
    }
}
