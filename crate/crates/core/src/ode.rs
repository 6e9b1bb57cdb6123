//! Classical two-ion dynamics under state-dependent kicks.
//!
//! Coordinates are displacements from equilibrium in oscillator units
//! (ħ = M = ω_t = 1, lengths in √(ħ/(M ω_t))). Between kicks the motion is
//! integrated with classical fourth-order Runge–Kutta while the action phase
//! dΦ/dt = ½(v₁² + v₂²) − V is accumulated alongside.

use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::Arc;

use nalgebra::{Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schemes::{KickTrain, PulseSequence};
use crate::trap::{equilibrium_positions, TrapConfiguration};

/// Interaction and confinement of the ion pair about its equilibrium.
///
/// Implement this to add trap anharmonicities or other corrections.
pub trait Potential: Send + Sync + std::fmt::Debug {
    /// Force on each ion at displacement `u`.
    fn force(&self, u: [f64; 2]) -> [f64; 2];
    /// Potential energy relative to the equilibrium configuration.
    fn energy(&self, u: [f64; 2]) -> f64;
    /// Hessian at equilibrium, ω_t² = 1 units.
    fn stiffness(&self) -> [[f64; 2]; 2];
}

/// Harmonic wells plus the full Coulomb repulsion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoulombPair {
    /// e²/(4πε₀) in oscillator units.
    pub strength: f64,
    /// Equilibrium separation of the two ions.
    pub separation: f64,
}

impl Potential for CoulombPair {
    fn force(&self, u: [f64; 2]) -> [f64; 2] {
        let (k, r) = (self.strength, self.separation);
        let d = u[1] - u[0];
        // k(1/r² − 1/(r+d)²) without cancellation
        let c = k * d * (2.0 * r + d) / (r * r * (r + d) * (r + d));
        [-u[0] + c, -u[1] - c]
    }

    fn energy(&self, u: [f64; 2]) -> f64 {
        let (k, r) = (self.strength, self.separation);
        let d = u[1] - u[0];
        0.5 * (u[0] * u[0] + u[1] * u[1]) + k * d * d / (r * r * (r + d))
    }

    fn stiffness(&self) -> [[f64; 2]; 2] {
        let c = 2.0 * self.strength / self.separation.powi(3);
        [[1.0 + c, -c], [-c, 1.0 + c]]
    }
}

/// Coulomb repulsion expanded to second order about equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedCoulombPair {
    pub strength: f64,
    pub separation: f64,
}

impl Potential for LinearizedCoulombPair {
    fn force(&self, u: [f64; 2]) -> [f64; 2] {
        let c = 2.0 * self.strength / self.separation.powi(3) * (u[1] - u[0]);
        [-u[0] + c, -u[1] - c]
    }

    fn energy(&self, u: [f64; 2]) -> f64 {
        let d = u[1] - u[0];
        0.5 * (u[0] * u[0] + u[1] * u[1]) + self.strength * d * d / self.separation.powi(3)
    }

    fn stiffness(&self) -> [[f64; 2]; 2] {
        let c = 2.0 * self.strength / self.separation.powi(3);
        [[1.0 + c, -c], [-c, 1.0 + c]]
    }
}

/// Which Coulomb model drives the trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoulombModel {
    #[default]
    Full,
    Linearized,
}

/// Two-qubit computational basis state; |0⟩ kicks forward, |1⟩ backward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisState {
    S00,
    S01,
    S10,
    S11,
}

impl BasisState {
    pub const ALL: [BasisState; 4] = [BasisState::S00, BasisState::S01, BasisState::S10, BasisState::S11];

    pub fn signs(self) -> [f64; 2] {
        match self {
            BasisState::S00 => [1.0, 1.0],
            BasisState::S01 => [1.0, -1.0],
            BasisState::S10 => [-1.0, 1.0],
            BasisState::S11 => [-1.0, -1.0],
        }
    }

    /// Target phase of the controlled-phase gate, up to a global phase.
    pub fn ideal_phase(self) -> f64 {
        let [a, b] = self.signs();
        a * b * FRAC_PI_4
    }

    pub fn label(self) -> &'static str {
        match self {
            BasisState::S00 => "00",
            BasisState::S01 => "01",
            BasisState::S10 => "10",
            BasisState::S11 => "11",
        }
    }
}

/// Positions, velocities and action phase of the pair at time `t`
/// (all in oscillator units).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryState {
    pub t: f64,
    pub x: [f64; 2],
    pub v: [f64; 2],
    pub phase: f64,
}

impl TrajectoryState {
    pub fn energy(&self, potential: &dyn Potential) -> f64 {
        0.5 * (self.v[0] * self.v[0] + self.v[1] * self.v[1]) + potential.energy(self.x)
    }
}

/// Velocity change from `pairs` pulse pairs for the given basis state.
pub fn apply_kick(state: TrajectoryState, pairs: f64, basis: BasisState, kick_velocity: f64) -> TrajectoryState {
    let s = basis.signs();
    TrajectoryState {
        v: [state.v[0] + s[0] * pairs * kick_velocity, state.v[1] + s[1] * pairs * kick_velocity],
        ..state
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub final_state: TrajectoryState,
    /// Every integration step when recording was requested.
    pub samples: Vec<TrajectoryState>,
}

/// One trajectory per basis state plus the kick-free reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub basis: Vec<(BasisState, Trajectory)>,
    pub reference: Trajectory,
    /// ω_t (rad/s).
    pub trap_frequency: f64,
    /// √(ħ/(M ω_t)) in metres.
    pub length_scale: f64,
    /// Linearised mode frequencies (units of ω_t) and unit mode vectors.
    pub mode_frequencies: Vec<f64>,
    pub mode_vectors: Vec<[f64; 2]>,
    /// Step size actually used, in trap periods.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeInfidelity {
    pub phase_mismatch: f64,
    /// Worst-case ΔP_i over the basis states, per ion.
    pub displacements: [f64; 2],
    pub total: f64,
}

impl TrajectorySet {
    pub fn trajectory(&self, state: BasisState) -> &Trajectory {
        &self.basis.iter().find(|(s, _)| *s == state).expect("all basis states simulated").1
    }

    /// ΔP_i = √(½Δx_i² + ½Δv_i²) relative to the reference, for one state.
    pub fn displacement(&self, state: BasisState, ion: usize) -> f64 {
        let f = &self.trajectory(state).final_state;
        let r = &self.reference.final_state;
        let dx = f.x[ion] - r.x[ion];
        let dv = f.v[ion] - r.v[ion];
        (0.5 * (dx * dx + dv * dv)).sqrt()
    }

    /// Rotating-frame phase-space point of mode `p` for a state's deviation
    /// from the reference: (√(ω/2) Q + i P/√(2ω)) e^{iωt}.
    pub fn rotating_frame_point(&self, sample: &TrajectoryState, reference: &TrajectoryState, p: usize) -> (f64, f64) {
        let w = self.mode_frequencies[p];
        let b = self.mode_vectors[p];
        let q = b[0] * (sample.x[0] - reference.x[0]) + b[1] * (sample.x[1] - reference.x[1]);
        let m = b[0] * (sample.v[0] - reference.v[0]) + b[1] * (sample.v[1] - reference.v[1]);
        let (re, im) = ((0.5 * w).sqrt() * q, m / (2.0 * w).sqrt());
        let (s, c) = (w * sample.t).sin_cos();
        (re * c - im * s, re * s + im * c)
    }
}

/// Worst-case unrestored motion of ion `ion` over the four basis states.
pub fn ode_motional_displacement(set: &TrajectorySet, ion: usize) -> f64 {
    BasisState::ALL.iter().map(|&s| set.displacement(s, ion)).fold(0.0, f64::max)
}

fn phase_mismatch_of(phases: &[(BasisState, f64)]) -> f64 {
    [1.0, -1.0]
        .iter()
        .map(|sigma| {
            let residuals = phases.iter().map(|(s, phi)| phi - sigma * s.ideal_phase());
            let max = residuals.clone().fold(f64::NEG_INFINITY, f64::max);
            let min = residuals.fold(f64::INFINITY, f64::min);
            0.5 * (max - min)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Worst-case deviation of the action phases from the ideal gate after
/// removing the best global phase.
///
/// The gate e^{−iπ/4 Z⊗Z} is as entangling as e^{+iπ/4 Z⊗Z}, so both sign
/// choices of the ideal phases are tried and the smaller mismatch is kept.
pub fn ode_phase_mismatch(set: &TrajectorySet) -> f64 {
    let phases: Vec<(BasisState, f64)> = set.basis.iter().map(|(s, tr)| (*s, tr.final_state.phase)).collect();
    phase_mismatch_of(&phases)
}

/// (2/3)Δφ² + (4/3)(½ + n̄)(ΔP₁² + ΔP₂²).
pub fn ode_infidelity(set: &TrajectorySet, mean_occupation: f64) -> OdeInfidelity {
    let finals: Vec<(BasisState, TrajectoryState)> = set.basis.iter().map(|(s, tr)| (*s, tr.final_state)).collect();
    final_state_infidelity(&finals, &set.reference.final_state, mean_occupation)
}

/// Infidelity from the end points of the basis-state trajectories and the
/// kick-free reference.
pub fn final_state_infidelity(
    finals: &[(BasisState, TrajectoryState)],
    reference: &TrajectoryState,
    mean_occupation: f64,
) -> OdeInfidelity {
    let phases: Vec<(BasisState, f64)> = finals.iter().map(|(s, f)| (*s, f.phase)).collect();
    let phase_mismatch = phase_mismatch_of(&phases);
    let mut displacements = [0.0f64; 2];
    for (_, f) in finals {
        for (i, d) in displacements.iter_mut().enumerate() {
            let dx = f.x[i] - reference.x[i];
            let dv = f.v[i] - reference.v[i];
            *d = d.max((0.5 * (dx * dx + dv * dv)).sqrt());
        }
    }
    let total = 2.0 / 3.0 * phase_mismatch * phase_mismatch
        + 4.0 / 3.0 * (0.5 + mean_occupation) * (displacements[0].powi(2) + displacements[1].powi(2));
    OdeInfidelity { phase_mismatch, displacements, total }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsOptions {
    /// Momentum per pulse pair in units of ħk.
    pub kick_factor: f64,
    /// Default integration step in trap periods.
    pub step: f64,
    /// Allowed relative energy drift per trap period during free evolution.
    pub energy_tolerance: f64,
    /// Step halvings attempted before giving up.
    pub max_refinements: usize,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        Self { kick_factor: 2.0, step: 1.0 / 4096.0, energy_tolerance: 1e-9, max_refinements: 4 }
    }
}

/// Kicked two-ion system ready for simulation.
#[derive(Debug, Clone)]
pub struct GateDynamics {
    potential: Arc<dyn Potential>,
    /// Velocity change per pulse pair, oscillator units.
    kick_velocity: f64,
    trap_frequency: f64,
    length_scale: f64,
    options: DynamicsOptions,
}

impl GateDynamics {
    /// Builds the two-ion dynamics of a trap configuration.
    pub fn new(config: &TrapConfiguration, model: CoulombModel, options: DynamicsOptions) -> Result<Self> {
        if config.ion_count != 2 {
            return Err(Error::Unsupported(format!(
                "trajectory simulation covers two ions, got {}",
                config.ion_count
            )));
        }
        let eq = equilibrium_positions(config)?;
        let centres = config.well_centres();
        let length_scale = config.oscillator_length();
        let separation = ((centres[1] - centres[0]) + (eq[1] - eq[0])) / length_scale;
        let strength = config.coulomb_strength();
        let potential: Arc<dyn Potential> = match model {
            CoulombModel::Full => Arc::new(CoulombPair { strength, separation }),
            CoulombModel::Linearized => Arc::new(LinearizedCoulombPair { strength, separation }),
        };
        let eta = config.lamb_dicke_parameter()?;
        Self::with_potential(potential, eta, config.trap_frequency, length_scale, options)
    }

    /// Dynamics driven by a caller-supplied potential.
    pub fn with_potential(
        potential: Arc<dyn Potential>,
        lamb_dicke: f64,
        trap_frequency: f64,
        length_scale: f64,
        options: DynamicsOptions,
    ) -> Result<Self> {
        if !(options.step > 0.0) || !(options.kick_factor > 0.0) {
            return Err(Error::InvalidConfig("step and kick factor must be positive".into()));
        }
        // ħk/(M L ω_t) = k L = √2 η
        let kick_velocity = options.kick_factor * std::f64::consts::SQRT_2 * lamb_dicke;
        Ok(Self { potential, kick_velocity, trap_frequency, length_scale, options })
    }

    pub fn kick_velocity(&self) -> f64 {
        self.kick_velocity
    }

    pub fn potential(&self) -> &dyn Potential {
        self.potential.as_ref()
    }

    pub fn options(&self) -> &DynamicsOptions {
        &self.options
    }

    pub fn trap_frequency(&self) -> f64 {
        self.trap_frequency
    }

    /// Linearised mode frequencies (ascending, units of ω_t) and vectors.
    pub fn modes(&self) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
        let k = self.potential.stiffness();
        let eig = SymmetricEigen::new(Matrix2::new(k[0][0], k[0][1], k[1][0], k[1][1]));
        let mut idx = [0usize, 1];
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut freqs = Vec::new();
        let mut vecs = Vec::new();
        for (p, &i) in idx.iter().enumerate() {
            let l = eig.eigenvalues[i];
            if !(l > 0.0) {
                return Err(Error::UnstableModes { mode: p, eigenvalue: l });
            }
            let mut v = [eig.eigenvectors[(0, i)], eig.eigenvectors[(1, i)]];
            let first = if v[0].abs() > 1e-12 { v[0] } else { v[1] };
            if first < 0.0 {
                v = [-v[0], -v[1]];
            }
            freqs.push(l.sqrt());
            vecs.push(v);
        }
        Ok((freqs, vecs))
    }

    /// Converts seconds to dimensionless time ω_t t.
    pub fn scaled_time(&self, seconds: f64) -> f64 {
        seconds * self.trap_frequency
    }

    /// Simulates pulse groups as single impulses (infinite repetition rate).
    pub fn simulate_sequence(&self, seq: &PulseSequence, record: bool) -> Result<TrajectorySet> {
        let impulses: Vec<(f64, f64)> =
            seq.groups.iter().map(|g| (self.scaled_time(g.time), g.pairs as f64)).collect();
        self.simulate(&impulses, self.scaled_time(seq.start), self.scaled_time(seq.end()), record)
    }

    /// Simulates individual kicks on the repetition-rate grid.
    ///
    /// The window `[start, end]` (s) is widened to include every kick.
    pub fn simulate_train(&self, train: &KickTrain, start: f64, end: f64, record: bool) -> Result<TrajectorySet> {
        let impulses: Vec<(f64, f64)> = train
            .kicks
            .iter()
            .map(|k| (self.scaled_time(train.time(k)), k.sign as f64))
            .collect();
        self.simulate(&impulses, self.scaled_time(start), self.scaled_time(end), record)
    }

    /// Simulates (time, pairs) impulses in dimensionless units.
    pub fn simulate(&self, impulses: &[(f64, f64)], start: f64, end: f64, record: bool) -> Result<TrajectorySet> {
        if impulses.iter().any(|(t, z)| !t.is_finite() || !z.is_finite()) || !start.is_finite() || !end.is_finite() {
            return Err(Error::Integration("non-finite impulse or window".into()));
        }
        let mut sorted = impulses.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let t0 = sorted.first().map_or(start, |k| k.0.min(start));
        let t1 = sorted.last().map_or(end, |k| k.0.max(end)).max(t0);
        let (mode_frequencies, mode_vectors) = self.modes()?;

        let mut step = self.options.step;
        for _ in 0..=self.options.max_refinements {
            let h = step * 2.0 * PI;
            let mut worst_drift: f64 = 0.0;
            let mut basis = Vec::with_capacity(4);
            for state in BasisState::ALL {
                let (traj, drift) = self.integrate(&sorted, t0, t1, h, Some(state), record);
                worst_drift = worst_drift.max(drift);
                basis.push((state, traj));
            }
            let (reference, _) = self.integrate(&[], t0, t1, h, None, record);
            if worst_drift <= self.options.energy_tolerance {
                return Ok(TrajectorySet {
                    basis,
                    reference,
                    trap_frequency: self.trap_frequency,
                    length_scale: self.length_scale,
                    mode_frequencies,
                    mode_vectors,
                    step,
                });
            }
            log::debug!("energy drift {worst_drift:e} per period at step {step}; refining");
            step *= 0.5;
        }
        Err(Error::Integration(format!(
            "energy drift above {:e} per trap period after {} refinements",
            self.options.energy_tolerance, self.options.max_refinements
        )))
    }

    /// Integrates one trajectory; returns it with the worst relative energy
    /// drift per trap period over the free-evolution segments.
    fn integrate(
        &self,
        impulses: &[(f64, f64)],
        t0: f64,
        t1: f64,
        h: f64,
        state: Option<BasisState>,
        record: bool,
    ) -> (Trajectory, f64) {
        let pot = self.potential.as_ref();
        let mut y = TrajectoryState { t: t0, ..Default::default() };
        let mut samples = Vec::new();
        if record {
            samples.push(y);
        }
        let mut drift_sum = 0.0;
        let mut next = 0;
        loop {
            // kicks at the current time
            while next < impulses.len() && impulses[next].0 <= y.t {
                if let Some(s) = state {
                    y = apply_kick(y, impulses[next].1, s, self.kick_velocity);
                }
                next += 1;
            }
            let target = if next < impulses.len() { impulses[next].0 } else { t1 };
            let span = target - y.t;
            if span > 0.0 {
                let steps = (span / h).ceil().max(1.0) as usize;
                let dt = span / steps as f64;
                let e0 = y.energy(pot);
                let start = y.t;
                for i in 0..steps {
                    y = rk4_step(pot, &y, dt);
                    y.t = if i + 1 == steps { target } else { start + dt * (i + 1) as f64 };
                    if record {
                        samples.push(y);
                    }
                }
                let e1 = y.energy(pot);
                if e0 > 0.0 {
                    drift_sum += (e1 - e0).abs() / e0;
                }
            } else {
                y.t = y.t.max(target);
            }
            if next >= impulses.len() && y.t >= t1 {
                break;
            }
        }
        let periods = ((t1 - t0) / (2.0 * PI)).max(1.0);
        (Trajectory { final_state: y, samples }, drift_sum / periods)
    }

    /// Infidelity of a pulse sequence at infinite repetition rate.
    pub fn sequence_infidelity(&self, seq: &PulseSequence, mean_occupation: f64) -> Result<OdeInfidelity> {
        Ok(ode_infidelity(&self.simulate_sequence(seq, false)?, mean_occupation))
    }

    /// Infidelity of a kick train over the window `[start, end]` (s).
    pub fn train_infidelity(&self, train: &KickTrain, start: f64, end: f64, mean_occupation: f64) -> Result<OdeInfidelity> {
        Ok(ode_infidelity(&self.simulate_train(train, start, end, false)?, mean_occupation))
    }
}

fn derivative(pot: &dyn Potential, y: &TrajectoryState) -> [f64; 5] {
    let f = pot.force(y.x);
    let lagrangian = 0.5 * (y.v[0] * y.v[0] + y.v[1] * y.v[1]) - pot.energy(y.x);
    [y.v[0], y.v[1], f[0], f[1], lagrangian]
}

fn rk4_step(pot: &dyn Potential, y: &TrajectoryState, dt: f64) -> TrajectoryState {
    let shifted = |k: &[f64; 5], s: f64| TrajectoryState {
        t: y.t,
        x: [y.x[0] + s * k[0], y.x[1] + s * k[1]],
        v: [y.v[0] + s * k[2], y.v[1] + s * k[3]],
        phase: y.phase + s * k[4],
    };
    let k1 = derivative(pot, y);
    let k2 = derivative(pot, &shifted(&k1, 0.5 * dt));
    let k3 = derivative(pot, &shifted(&k2, 0.5 * dt));
    let k4 = derivative(pot, &shifted(&k3, dt));
    let mut inc = [0.0; 5];
    for i in 0..5 {
        inc[i] = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
    }
    shifted(&inc, dt)
}
