//! Truncated infidelity under the linearised-Coulomb, infinite-rate model.

use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schemes::PulseSequence;
use crate::trap::ModeStructure;

/// How the i ≠ j double sum of the phase condition is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairCounting {
    /// Each unordered pair once. Matches the action phase of 2ħk kicks.
    #[default]
    Once,
    /// Each unordered pair twice, the literal i ≠ j sum.
    Twice,
}

impl PairCounting {
    fn factor(self) -> f64 {
        match self {
            PairCounting::Once => 1.0,
            PairCounting::Twice => 2.0,
        }
    }
}

/// Totals above this are outside the regime where the truncation is trusted.
pub const TRUST_REGION_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfidelityBreakdown {
    /// Phase mismatch Δφ (rad), signed: |accumulated| − π/4.
    pub phase_mismatch: f64,
    /// ΔP_p per mode.
    pub displacements: Vec<f64>,
    pub total: f64,
    /// Set when `total` exceeds [`TRUST_REGION_LIMIT`].
    pub outside_trust_region: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModeTerm {
    /// ω_p (rad/s).
    omega: f64,
    /// ω_t/ω_p.
    ratio: f64,
    /// b_p^A b_p^B.
    product: f64,
    /// (b_p^A)² + (b_p^B)².
    weight: f64,
    occupation: f64,
}

/// Everything needed to evaluate the truncated cost for one ion pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    eta: f64,
    terms: Vec<ModeTerm>,
    counting: PairCounting,
    ions: (usize, usize),
}

impl CostModel {
    /// `occupations` holds n̄ per mode; a single entry is broadcast.
    pub fn new(
        modes: &ModeStructure,
        eta: f64,
        occupations: &[f64],
        ions: (usize, usize),
        counting: PairCounting,
    ) -> Result<Self> {
        let (a, b) = ions;
        let n = modes.ion_count();
        if a >= n || b >= n || a == b {
            return Err(Error::InvalidConfig(format!("ion pair ({a}, {b}) invalid for {n} ions")));
        }
        if !(eta > 0.0) {
            return Err(Error::InvalidConfig("lamb_dicke must be positive".into()));
        }
        let p = modes.mode_count();
        if occupations.len() != 1 && occupations.len() != p {
            return Err(Error::InvalidConfig(format!(
                "{} occupations given for {p} modes",
                occupations.len()
            )));
        }
        if occupations.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidConfig("mean occupations must be non-negative".into()));
        }
        let terms = (0..p)
            .map(|q| {
                let row = &modes.coupling[q];
                ModeTerm {
                    omega: modes.frequencies[q],
                    ratio: modes.trap_frequency / modes.frequencies[q],
                    product: row[a] * row[b],
                    weight: row[a] * row[a] + row[b] * row[b],
                    occupation: if occupations.len() == 1 { occupations[0] } else { occupations[q] },
                }
            })
            .collect();
        Ok(Self { eta, terms, counting, ions })
    }

    /// Model for ions (0, 1) with a uniform occupation.
    pub fn for_pair(modes: &ModeStructure, eta: f64, occupation: f64) -> Result<Self> {
        Self::new(modes, eta, &[occupation], (0, 1), PairCounting::default())
    }

    pub fn with_counting(mut self, counting: PairCounting) -> Self {
        self.counting = counting;
        self
    }

    pub fn lamb_dicke(&self) -> f64 {
        self.eta
    }

    pub fn mode_count(&self) -> usize {
        self.terms.len()
    }

    pub fn ions(&self) -> (usize, usize) {
        self.ions
    }

    pub fn counting(&self) -> PairCounting {
        self.counting
    }

    pub fn mode_frequency(&self, p: usize) -> f64 {
        self.terms[p].omega
    }

    /// Factor 2η√(ω_t/ω_p) converting |Σ z e^{−iωt}| into ΔP_p.
    pub fn displacement_scale(&self, p: usize) -> f64 {
        2.0 * self.eta * self.terms[p].ratio.sqrt()
    }

    /// Weight (4/3)(½ + n̄_p)((b^A)² + (b^B)²) multiplying ΔP_p².
    pub fn displacement_weight(&self, p: usize) -> f64 {
        let t = &self.terms[p];
        4.0 / 3.0 * (0.5 + t.occupation) * t.weight
    }

    fn phase_prefactor(&self, p: usize) -> f64 {
        let t = &self.terms[p];
        8.0 * self.eta * self.eta * t.ratio * t.product * self.counting.factor()
    }

    /// Signed accumulated phase 8η² Σ_p (ω_t/ω_p) b^A b^B Σ_pairs z_i z_j sin(ω_p|t_i − t_j|).
    pub fn accumulated_phase(&self, groups: &[(f64, f64)]) -> f64 {
        let order = sorted_order(groups);
        (0..self.terms.len())
            .map(|p| self.phase_prefactor(p) * pair_sine_sum(groups, &order, self.terms[p].omega))
            .sum()
    }

    /// Δφ = |accumulated phase| − π/4.
    pub fn phase_mismatch(&self, groups: &[(f64, f64)]) -> f64 {
        self.accumulated_phase(groups).abs() - FRAC_PI_4
    }

    /// Σ_k z_k e^{−iω_p t_k}.
    pub fn mode_amplitude(&self, groups: &[(f64, f64)], p: usize) -> Complex64 {
        let w = self.terms[p].omega;
        groups.iter().map(|&(z, t)| z * Complex64::from_polar(1.0, -w * t)).sum()
    }

    /// ΔP_p = 2η√(ω_t/ω_p)|Σ_k z_k e^{−iω_p t_k}|.
    pub fn motional_displacement(&self, groups: &[(f64, f64)], p: usize) -> f64 {
        self.displacement_scale(p) * self.mode_amplitude(groups, p).norm()
    }

    /// ΔP_p for an antisymmetric sequence, 2η√(ω_t/ω_p)|Σ_k z_k sin(ω_p t_k)|.
    pub fn antisym_displacement(&self, seq: &PulseSequence, p: usize) -> Result<f64> {
        if !seq.is_antisymmetric(1e-12 * seq.gate_time) {
            return Err(Error::InvalidSequence("sequence is not antisymmetric".into()));
        }
        let w = self.terms[p].omega;
        let s: f64 = seq.groups.iter().map(|g| g.pairs as f64 * (w * g.time).sin()).sum();
        Ok(self.displacement_scale(p) * s.abs())
    }

    pub fn breakdown(&self, groups: &[(f64, f64)]) -> InfidelityBreakdown {
        let phase_mismatch = self.phase_mismatch(groups);
        let displacements: Vec<f64> =
            (0..self.terms.len()).map(|p| self.motional_displacement(groups, p)).collect();
        let total = 2.0 / 3.0 * phase_mismatch * phase_mismatch
            + displacements
                .iter()
                .enumerate()
                .map(|(p, d)| self.displacement_weight(p) * d * d)
                .sum::<f64>();
        InfidelityBreakdown {
            phase_mismatch,
            displacements,
            total,
            outside_trust_region: total > TRUST_REGION_LIMIT,
        }
    }

    pub fn truncated_infidelity(&self, seq: &PulseSequence) -> InfidelityBreakdown {
        self.breakdown(&seq.as_continuous())
    }

    pub fn cost(&self, groups: &[(f64, f64)]) -> f64 {
        self.breakdown(groups).total
    }

    /// Residual vector whose squared norm is the total cost:
    /// [√(2/3)Δφ, √w_p·scale_p·Re S_p, √w_p·scale_p·Im S_p, …].
    pub fn residuals(&self, groups: &[(f64, f64)]) -> Vec<f64> {
        let mut r = Vec::with_capacity(1 + 2 * self.terms.len());
        r.push((2.0f64 / 3.0).sqrt() * self.phase_mismatch(groups));
        for p in 0..self.terms.len() {
            let s = self.mode_amplitude(groups, p) * (self.displacement_weight(p).sqrt() * self.displacement_scale(p));
            r.push(s.re);
            r.push(s.im);
        }
        r
    }

    /// Total cost and its gradient with respect to every z_k at fixed times.
    pub fn cost_and_gradient(&self, groups: &[(f64, f64)], grad: &mut [f64]) -> f64 {
        let n = groups.len();
        assert_eq!(grad.len(), n);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let order = sorted_order(groups);

        let mut phase = 0.0;
        let mut phase_grad = vec![0.0; n];
        let mut total = 0.0;
        let mut prefix = vec![Complex64::new(0.0, 0.0); n];
        for (p, term) in self.terms.iter().enumerate() {
            let w = term.omega;
            let e: Vec<Complex64> = groups.iter().map(|&(_, t)| Complex64::from_polar(1.0, -w * t)).collect();
            // ordered accumulators: prefix[k] = Σ_{j before k} z_j e^{−iωt_j}
            let mut acc = Complex64::new(0.0, 0.0);
            for &k in &order {
                prefix[k] = acc;
                acc += groups[k].0 * e[k];
            }
            let amplitude = acc;
            let mut sum = 0.0;
            let mut suffix = Complex64::new(0.0, 0.0);
            let c = self.phase_prefactor(p);
            for &k in order.iter().rev() {
                // Σ_{j before k} z_j sin(ω(t_k − t_j)) = Im(conj(e_k) prefix_k)
                let before = (e[k].conj() * prefix[k]).im;
                // Σ_{j after k} z_j sin(ω(t_j − t_k)) = Im(e_k conj(suffix_k))
                let after = (e[k] * suffix.conj()).im;
                sum += groups[k].0 * before;
                phase_grad[k] += c * (before + after);
                suffix += groups[k].0 * e[k];
            }
            phase += c * sum;

            let scale = self.displacement_scale(p);
            let weight = self.displacement_weight(p) * scale * scale;
            total += weight * amplitude.norm_sqr();
            for k in 0..n {
                grad[k] += weight * 2.0 * (amplitude.conj() * e[k]).re;
            }
        }
        let mismatch = phase.abs() - FRAC_PI_4;
        total += 2.0 / 3.0 * mismatch * mismatch;
        let sign = if phase < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            grad[k] += 4.0 / 3.0 * mismatch * sign * phase_grad[k];
        }
        total
    }
}

fn sorted_order(groups: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..groups.len()).collect();
    if !groups.windows(2).all(|w| w[0].1 <= w[1].1) {
        order.sort_by(|&a, &b| groups[a].1.total_cmp(&groups[b].1));
    }
    order
}

/// Σ_{i<j} z_i z_j sin(ω|t_i − t_j|) in O(N) via a running complex sum.
fn pair_sine_sum(groups: &[(f64, f64)], order: &[usize], omega: f64) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut sum = 0.0;
    for &k in order {
        let (z, t) = groups[k];
        let e = Complex64::from_polar(1.0, -omega * t);
        sum += z * (e.conj() * acc).im;
        acc += z * e;
    }
    sum
}
