//! JSON result record with re-evaluation on load.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use fastgate::global::cost_model;
use fastgate::{
    expand_to_kick_train, error_budget_table, normal_modes, CostModel, ErrorBudget, GateDynamics, GateSolution,
    InfidelityBreakdown, ModeStructure, OdeInfidelity, TrapConfiguration,
};
use serde::{Deserialize, Serialize};

use crate::manifest::RunManifest;
use crate::Stage;

pub const RECORD_VERSION: u32 = 1;

/// Relative tolerance of the load-time re-evaluation.
pub const VERIFY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub repetition_rate: f64,
    /// Phase-two solution; its refinement holds the snapped starting cost.
    pub refined: GateSolution,
}

impl RateResult {
    pub fn snapped(&self) -> &OdeInfidelity {
        &self.refined.refinement.as_ref().expect("refined solutions carry a refinement").initial_ode
    }

    pub fn ode(&self) -> &OdeInfidelity {
        &self.refined.refinement.as_ref().expect("refined solutions carry a refinement").ode
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub version: u32,
    pub manifest: RunManifest,
    /// Trap actually simulated (spacing solved from χ when requested).
    pub trap: TrapConfiguration,
    pub modes: Option<ModeStructure>,
    pub chi: Option<f64>,
    /// Phase-one solution.
    pub global: Option<GateSolution>,
    /// ODE check of the phase-one solution at infinite repetition rate.
    pub coulomb: Option<OdeInfidelity>,
    pub rates: Vec<RateResult>,
    pub budget: Option<ErrorBudget>,
    pub notes: Vec<String>,
    pub failure: Option<StageFailure>,
    /// Wall-clock seconds per stage.
    pub timing: BTreeMap<String, f64>,
}

impl ResultRecord {
    pub fn new(manifest: RunManifest) -> Self {
        Self {
            version: RECORD_VERSION,
            trap: manifest.trap.clone(),
            manifest,
            modes: None,
            chi: None,
            global: None,
            coulomb: None,
            rates: Vec::new(),
            budget: None,
            notes: Vec::new(),
            failure: None,
            timing: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).context("serialising record")?;
        s.push('\n');
        Ok(s)
    }

    /// Parses without re-evaluating.
    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).context("parsing record")?;
        ensure!(r.version == RECORD_VERSION, "record version {} is not supported (expected {RECORD_VERSION})", r.version);
        Ok(r)
    }

    /// Reads a record and checks every stored infidelity against a fresh
    /// evaluation of the stored sequences.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let r = Self::from_json(&text).with_context(|| format!("in {}", path.display()))?;
        r.verify().with_context(|| format!("verifying {}", path.display()))?;
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).with_context(|| format!("writing {}", path.display()))
    }

    /// Same record with timing removed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        Self { timing: BTreeMap::new(), ..self.clone() }
    }

    pub fn verify(&self) -> Result<()> {
        let Some(modes) = &self.modes else { return Ok(()) };
        let fresh = normal_modes(&self.trap).context("recomputing modes")?;
        for (a, b) in fresh.frequencies.iter().zip(&modes.frequencies) {
            close("mode frequency", *b, *a)?;
        }
        let Some(global) = &self.global else { return Ok(()) };
        let model = cost_model(&self.manifest.global, &self.trap, modes)?;
        check_breakdown("phase-one", &global.breakdown, &model.truncated_infidelity(&global.sequence))?;

        if let Some(stored) = &self.coulomb {
            let dynamics = GateDynamics::new(&self.trap, self.manifest.check_model, self.manifest.local.dynamics)?;
            let fresh = dynamics.sequence_infidelity(&global.sequence, self.trap.mean_occupation)?;
            check_ode("infinite-rate ODE", stored, &fresh)?;
        }

        let local_model = CostModel::new(
            modes,
            self.trap.lamb_dicke_parameter()?,
            &[self.trap.mean_occupation],
            (0, 1),
            self.manifest.local.counting,
        )?;
        for rate in &self.rates {
            let cfg = self.manifest.local_config(rate.repetition_rate);
            let Some(r) = &rate.refined.refinement else { bail!("refined solution at {:e} Hz has no refinement", rate.repetition_rate) };
            let dynamics = GateDynamics::new(&self.trap, cfg.coulomb, cfg.dynamics)?;
            let label = format!("{:e} Hz", rate.repetition_rate);

            let snapped = expand_to_kick_train(&global.sequence, rate.repetition_rate)?;
            let (lo, hi) = global.sequence.extended_window(cfg.extension);
            let fresh = dynamics.train_infidelity(&snapped, lo, hi, self.trap.mean_occupation)?;
            check_ode(&format!("snapped at {label}"), &r.initial_ode, &fresh)?;

            let seq = &rate.refined.sequence;
            let fresh = dynamics.train_infidelity(&r.train, seq.start, seq.end(), self.trap.mean_occupation)?;
            check_ode(&format!("refined at {label}"), &r.ode, &fresh)?;
            check_breakdown(&format!("refined truncated at {label}"), &rate.refined.breakdown, &local_model.truncated_infidelity(seq))?;
        }

        if let Some(stored) = &self.budget {
            let solutions: Vec<GateSolution> =
                std::iter::once(global.clone()).chain(self.rates.iter().map(|r| r.refined.clone())).collect();
            let fresh = error_budget_table(&solutions, &stored.epsilons, self.trap.trap_frequency, stored.cutoff)?;
            ensure!(fresh.rows.len() == stored.rows.len(), "budget has {} rows, expected {}", stored.rows.len(), fresh.rows.len());
            for (a, b) in stored.rows.iter().zip(&fresh.rows) {
                close("budget infidelity", a.infidelity, b.infidelity)?;
                ensure!(a.pulse_pairs == b.pulse_pairs, "budget pulse count {} differs from {}", a.pulse_pairs, b.pulse_pairs);
                for (x, y) in a.cells.iter().zip(&b.cells) {
                    match (x, y) {
                        (Some(x), Some(y)) => close("budget cell", *x, *y)?,
                        (None, None) => {}
                        _ => bail!("budget cell populated differently on re-evaluation"),
                    }
                }
            }
        }
        Ok(())
    }
}

fn close(what: &str, stored: f64, fresh: f64) -> Result<()> {
    let scale = stored.abs().max(fresh.abs());
    if (stored - fresh).abs() > VERIFY_TOLERANCE * scale {
        bail!("{what}: stored {stored:e}, re-evaluated {fresh:e}");
    }
    Ok(())
}

fn check_breakdown(what: &str, stored: &InfidelityBreakdown, fresh: &InfidelityBreakdown) -> Result<()> {
    close(&format!("{what} total"), stored.total, fresh.total)?;
    close(&format!("{what} phase mismatch"), stored.phase_mismatch, fresh.phase_mismatch)?;
    for (a, b) in stored.displacements.iter().zip(&fresh.displacements) {
        close(&format!("{what} displacement"), *a, *b)?;
    }
    Ok(())
}

fn check_ode(what: &str, stored: &OdeInfidelity, fresh: &OdeInfidelity) -> Result<()> {
    close(&format!("{what} total"), stored.total, fresh.total)?;
    close(&format!("{what} phase mismatch"), stored.phase_mismatch, fresh.phase_mismatch)?;
    for i in 0..2 {
        close(&format!("{what} displacement"), stored.displacements[i], fresh.displacements[i])?;
    }
    Ok(())
}
