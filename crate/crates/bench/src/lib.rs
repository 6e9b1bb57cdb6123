//! Shared fixtures for the benchmarks.

use std::f64::consts::PI;

use fastgate::{normal_modes, CostModel, PulseGroup, PulseSequence, TrapConfiguration};

pub fn paul_pair() -> TrapConfiguration {
    TrapConfiguration::paul_trap(2)
}

pub fn period(trap: &TrapConfiguration) -> f64 {
    2.0 * PI / trap.trap_frequency
}

pub fn pair_model(trap: &TrapConfiguration) -> CostModel {
    let modes = normal_modes(trap).expect("modes");
    CostModel::for_pair(&modes, trap.lamb_dicke_parameter().expect("eta"), trap.mean_occupation).expect("model")
}

/// A GPG-style sequence with deterministic, sign-alternating counts.
pub fn gpg_sequence(trap: &TrapConfiguration, groups: usize, gate_periods: f64) -> PulseSequence {
    let t = gate_periods * period(trap);
    let groups = (1..=groups)
        .map(|k| PulseGroup { pairs: if k % 2 == 0 { -(k as i64) - 3 } else { k as i64 + 5 }, time: t * k as f64 / groups as f64 })
        .collect();
    PulseSequence::new(groups, t, 0.0).expect("sequence")
}
