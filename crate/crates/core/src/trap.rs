//! Ion-chain geometry and motional normal modes.
//!
//! Everything is solved in the natural Coulomb length scale
//! ℓ = (e²/(4πε₀ M ω_t²))^(1/3) with ω_t = 1, where the force on ion i is
//! `−(X_i − c_i) + Σ_j sgn(X_i − X_j)/(X_i − X_j)²` for trap (or well)
//! centre `c_i`. SI quantities appear only on the way in and out.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units;

/// Trap architecture hosting the ion chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// All ions share one harmonic well.
    PaulTrap,
    /// One ion per well, wells spaced `spacing` metres apart along the axis.
    MicrotrapArray { spacing: f64 },
}

/// Physical description of the trapped-ion system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrapConfiguration {
    pub architecture: Architecture,
    pub ion_count: usize,
    /// Angular trap frequency ω_t (rad/s).
    pub trap_frequency: f64,
    /// Ion mass (kg).
    pub ion_mass: f64,
    /// Laser wavenumber k (rad/m). Derived from the Lamb-Dicke parameter when absent.
    pub laser_wavenumber: Option<f64>,
    /// Lamb-Dicke parameter η. Derived from the wavenumber when absent.
    pub lamb_dicke: Option<f64>,
    /// Mean thermal occupation applied to every mode.
    pub mean_occupation: f64,
    pub elementary_charge: f64,
    pub vacuum_permittivity: f64,
}

impl Default for TrapConfiguration {
    fn default() -> Self {
        Self {
            architecture: Architecture::PaulTrap,
            ion_count: 2,
            trap_frequency: units::DEFAULT_TRAP_FREQUENCY,
            ion_mass: units::CA40_ION_MASS,
            laser_wavenumber: None,
            lamb_dicke: Some(units::DEFAULT_LAMB_DICKE),
            mean_occupation: units::DEFAULT_MEAN_OCCUPATION,
            elementary_charge: units::ELEMENTARY_CHARGE,
            vacuum_permittivity: units::VACUUM_PERMITTIVITY,
        }
    }
}

impl TrapConfiguration {
    pub fn paul_trap(ion_count: usize) -> Self {
        Self { ion_count, ..Self::default() }
    }

    pub fn microtrap_pair(spacing: f64) -> Self {
        Self {
            architecture: Architecture::MicrotrapArray { spacing },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ion_count == 0 {
            return Err(Error::InvalidConfig("ion_count must be at least 1".into()));
        }
        if !(self.trap_frequency > 0.0) || !self.trap_frequency.is_finite() {
            return Err(Error::InvalidConfig("trap_frequency must be positive".into()));
        }
        if !(self.ion_mass > 0.0) {
            return Err(Error::InvalidConfig("ion_mass must be positive".into()));
        }
        if let Architecture::MicrotrapArray { spacing } = self.architecture {
            if !(spacing > 0.0) || !spacing.is_finite() {
                return Err(Error::InvalidConfig("microtrap spacing must be positive".into()));
            }
        }
        if !(self.mean_occupation >= 0.0) {
            return Err(Error::InvalidConfig("mean_occupation must be non-negative".into()));
        }
        if self.lamb_dicke.is_none() && self.laser_wavenumber.is_none() {
            return Err(Error::InvalidConfig(
                "either lamb_dicke or laser_wavenumber must be given".into(),
            ));
        }
        self.lamb_dicke_parameter().map(|_| ())
    }

    /// Oscillator length √(ħ/(M ω_t)) in metres.
    pub fn oscillator_length(&self) -> f64 {
        (units::HBAR / (self.ion_mass * self.trap_frequency)).sqrt()
    }

    /// Coulomb length scale ℓ in metres.
    pub fn length_scale(&self) -> f64 {
        let e = self.elementary_charge;
        (e * e / (4.0 * PI * self.vacuum_permittivity * self.ion_mass * self.trap_frequency.powi(2)))
            .cbrt()
    }

    /// Coulomb coupling e²/(4πε₀) in oscillator units (ħ = M = ω_t = 1).
    pub fn coulomb_strength(&self) -> f64 {
        (self.length_scale() / self.oscillator_length()).powi(3)
    }

    /// Lamb-Dicke parameter η = k √(ħ/(2 M ω_t)).
    ///
    /// When both η and k are configured they must agree to 1e-12 relative.
    pub fn lamb_dicke_parameter(&self) -> Result<f64> {
        let zero_point = (units::HBAR / (2.0 * self.ion_mass * self.trap_frequency)).sqrt();
        match (self.lamb_dicke, self.laser_wavenumber) {
            (Some(eta), None) if eta > 0.0 => Ok(eta),
            (None, Some(k)) if k > 0.0 => Ok(k * zero_point),
            (Some(eta), Some(k)) if eta > 0.0 && k > 0.0 => {
                let derived = k * zero_point;
                if ((eta - derived) / derived).abs() > 1e-12 {
                    Err(Error::InvalidConfig(format!(
                        "lamb_dicke {eta} disagrees with wavenumber-derived value {derived}"
                    )))
                } else {
                    Ok(eta)
                }
            }
            _ => Err(Error::InvalidConfig("lamb_dicke and laser_wavenumber must be positive".into())),
        }
    }

    /// Laser wavenumber (rad/m), derived from η when not given explicitly.
    pub fn wavenumber(&self) -> Result<f64> {
        match self.laser_wavenumber {
            Some(k) => Ok(k),
            None => {
                let zero_point = (units::HBAR / (2.0 * self.ion_mass * self.trap_frequency)).sqrt();
                Ok(self.lamb_dicke_parameter()? / zero_point)
            }
        }
    }

    /// Trap or well centres in units of ℓ, ascending.
    pub fn centres_scaled(&self) -> Vec<f64> {
        match self.architecture {
            Architecture::PaulTrap => vec![0.0; self.ion_count],
            Architecture::MicrotrapArray { spacing } => {
                let d = spacing / self.length_scale();
                let mid = (self.ion_count as f64 - 1.0) / 2.0;
                (0..self.ion_count).map(|i| (i as f64 - mid) * d).collect()
            }
        }
    }

    /// Trap or well centres in metres.
    pub fn well_centres(&self) -> Vec<f64> {
        let l = self.length_scale();
        self.centres_scaled().into_iter().map(|c| c * l).collect()
    }
}

/// Frequencies and ion couplings of the motional normal modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStructure {
    /// ω_t (rad/s) used to build the structure.
    pub trap_frequency: f64,
    /// Ascending mode frequencies ω_p (rad/s).
    pub frequencies: Vec<f64>,
    /// Row p holds b_p, the coupling of every ion to mode p.
    pub coupling: Vec<Vec<f64>>,
    /// Equilibrium positions (m): absolute for a Paul trap, offsets from the
    /// well centres for a microtrap array, empty when modes were given directly.
    pub equilibrium_positions: Vec<f64>,
}

impl ModeStructure {
    pub fn mode_count(&self) -> usize {
        self.frequencies.len()
    }

    pub fn ion_count(&self) -> usize {
        self.coupling.first().map_or(0, Vec::len)
    }

    /// ω_p / ω_t.
    pub fn relative_frequency(&self, mode: usize) -> f64 {
        self.frequencies[mode] / self.trap_frequency
    }

    /// Σ_p ω_p² b_p b_pᵀ in units of ω_t², i.e. the mass-normalised Hessian.
    pub fn reconstructed_hessian(&self) -> DMatrix<f64> {
        let n = self.ion_count();
        let mut h = DMatrix::zeros(n, n);
        for (p, row) in self.coupling.iter().enumerate() {
            let w2 = self.relative_frequency(p).powi(2);
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] += w2 * row[i] * row[j];
                }
            }
        }
        h
    }
}

/// Normalised splitting χ = (ω_b − ω_c)/ω_t of a two-mode system.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ModeDifference(pub f64);

impl ModeDifference {
    pub fn value(self) -> f64 {
        self.0
    }
}

const NEWTON_MAX_ITERATIONS: usize = 200;
const FORCE_TOLERANCE: f64 = 1e-12;

fn forces(centres: &[f64], offsets: &[f64]) -> Vec<f64> {
    let n = centres.len();
    let mut f: Vec<f64> = offsets.iter().map(|u| -u).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let r = (centres[i] - centres[j]) + (offsets[i] - offsets[j]);
                f[i] += r.signum() / (r * r);
            }
        }
    }
    f
}

/// Mass-normalised Hessian of the total potential, ω_t = 1, ℓ units.
fn hessian(centres: &[f64], offsets: &[f64]) -> DMatrix<f64> {
    let n = centres.len();
    let mut h = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let r = ((centres[i] - centres[j]) + (offsets[i] - offsets[j])).abs();
                let k = 2.0 / (r * r * r);
                h[(i, i)] += k;
                h[(i, j)] -= k;
            }
        }
    }
    h
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn is_ordered(centres: &[f64], offsets: &[f64]) -> bool {
    (1..centres.len()).all(|i| centres[i] + offsets[i] > centres[i - 1] + offsets[i - 1])
}

/// Offsets from the centres (ℓ units) that balance trap and Coulomb forces.
fn solve_equilibrium_scaled(centres: &[f64]) -> Result<Vec<f64>> {
    let n = centres.len();
    let paul = centres.iter().all(|&c| c == 0.0);
    let mut u: Vec<f64> = if paul && n > 1 {
        // roughly the central spacing of a long chain
        let spacing = 2.0 * (n as f64).powf(-0.56);
        let mid = (n as f64 - 1.0) / 2.0;
        (0..n).map(|i| (i as f64 - mid) * spacing).collect()
    } else {
        vec![0.0; n]
    };
    let mut f = forces(centres, &u);
    let mut residual = max_abs(&f);
    for _ in 0..NEWTON_MAX_ITERATIONS {
        if residual < FORCE_TOLERANCE {
            return Ok(u);
        }
        // dF/du = −H
        let h = hessian(centres, &u);
        let step = match h.lu().solve(&DVector::from_vec(f.clone())) {
            Some(s) => s,
            None => break,
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1e-10 {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, s)| a + lambda * s).collect();
            if is_ordered(centres, &trial) {
                let ft = forces(centres, &trial);
                let rt = max_abs(&ft);
                if rt < residual || rt < FORCE_TOLERANCE {
                    u = trial;
                    f = ft;
                    residual = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if residual < FORCE_TOLERANCE {
        Ok(u)
    } else {
        Err(Error::EquilibriumNotConverged { iterations: NEWTON_MAX_ITERATIONS, residual })
    }
}

/// Equilibrium positions in metres.
///
/// For a Paul trap these are absolute positions about the trap centre; for a
/// microtrap array they are each ion's displacement from its own well centre.
pub fn equilibrium_positions(config: &TrapConfiguration) -> Result<Vec<f64>> {
    config.validate()?;
    let l = config.length_scale();
    let u = solve_equilibrium_scaled(&config.centres_scaled())?;
    Ok(u.into_iter().map(|x| x * l).collect())
}

/// Normal modes of the chain about its equilibrium.
pub fn normal_modes(config: &TrapConfiguration) -> Result<ModeStructure> {
    config.validate()?;
    let centres = config.centres_scaled();
    let u = solve_equilibrium_scaled(&centres)?;
    let h = hessian(&centres, &u);
    let n = centres.len();
    let eigen = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));

    let mut frequencies = Vec::with_capacity(n);
    let mut coupling = Vec::with_capacity(n);
    for (p, &idx) in order.iter().enumerate() {
        let lambda = eigen.eigenvalues[idx];
        if !(lambda > 0.0) {
            return Err(Error::UnstableModes { mode: p, eigenvalue: lambda });
        }
        frequencies.push(config.trap_frequency * lambda.sqrt());
        let mut row: Vec<f64> = eigen.eigenvectors.column(idx).iter().copied().collect();
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        row.iter_mut().for_each(|x| *x /= norm);
        if let Some(first) = row.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                row.iter_mut().for_each(|x| *x = -*x);
            }
        }
        coupling.push(row);
    }
    let l = config.length_scale();
    Ok(ModeStructure {
        trap_frequency: config.trap_frequency,
        frequencies,
        coupling,
        equilibrium_positions: u.into_iter().map(|x| x * l).collect(),
    })
}

/// χ = (ω_b − ω_c)/ω_t for a two-mode structure.
///
/// The common mode is the one whose two couplings share a sign.
pub fn chi_from_modes(modes: &ModeStructure) -> Result<ModeDifference> {
    if modes.mode_count() != 2 || modes.ion_count() != 2 {
        return Err(Error::Unsupported(format!(
            "χ is defined for exactly two modes, got {}; use the full mode structure",
            modes.mode_count()
        )));
    }
    let product = |p: usize| modes.coupling[p][0] * modes.coupling[p][1];
    let (common, breathing) = if product(0) >= product(1) { (0, 1) } else { (1, 0) };
    Ok(ModeDifference(
        (modes.frequencies[breathing] - modes.frequencies[common]) / modes.trap_frequency,
    ))
}

/// Two-ion mode structure specified directly by χ.
pub fn modes_from_chi(chi: f64, trap_frequency: f64) -> Result<ModeStructure> {
    if !(1.0 + chi > 0.0) || !chi.is_finite() {
        return Err(Error::InvalidConfig(format!("χ = {chi} gives a non-positive breathing frequency")));
    }
    if !(trap_frequency > 0.0) {
        return Err(Error::InvalidConfig("trap_frequency must be positive".into()));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let common = (trap_frequency, vec![s, s]);
    let breathing = (trap_frequency * (1.0 + chi), vec![s, -s]);
    let (first, second) = if chi < 0.0 { (breathing, common) } else { (common, breathing) };
    Ok(ModeStructure {
        trap_frequency,
        frequencies: vec![first.0, second.0],
        coupling: vec![first.1, second.1],
        equilibrium_positions: Vec::new(),
    })
}

/// Microtrap spacing (m) whose two-ion longitudinal modes give the requested χ.
pub fn spacing_for_chi(config: &TrapConfiguration, chi: f64) -> Result<f64> {
    if !(chi > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "a microtrap pair has χ > 0; cannot realise χ = {chi}"
        )));
    }
    let chi_at = |spacing: f64| -> Result<f64> {
        let cfg = TrapConfiguration {
            architecture: Architecture::MicrotrapArray { spacing },
            ion_count: 2,
            ..config.clone()
        };
        Ok(chi_from_modes(&normal_modes(&cfg)?)?.value())
    };
    // χ ≈ 2 (ℓ/d)³ far apart
    let guess = config.length_scale() * (2.0 / chi).cbrt();
    let (mut lo, mut hi) = (0.5 * guess, 2.0 * guess);
    while chi_at(lo)? < chi {
        lo *= 0.5;
    }
    while chi_at(hi)? > chi {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_at(mid)? > chi {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) / mid < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
