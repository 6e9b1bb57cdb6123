//! Design of fast two-qubit gates driven by ultrafast state-dependent kicks.

pub mod budget;
pub mod cost;
pub mod error;
pub mod global;
pub mod local;
pub mod numeric;
pub mod ode;
pub mod schemes;
pub mod trap;
pub mod units;

pub use budget::{
    degraded_fidelity, epsilon_from_intensity_noise, error_budget_table, BudgetRow, ErrorBudget, PulseErrorSpec,
    DEFAULT_REGIME_CUTOFF,
};
pub use cost::{CostModel, InfidelityBreakdown, PairCounting};
pub use error::{Error, Result};
pub use global::{
    extrapolate_gate_time, optimize_global, round_to_integers, GateSolution, GlobalSearchConfig, RoundingMode,
    SolutionPhase,
};
pub use local::{enumerate_grid_shifts, optimize_local, LocalSearchConfig};
pub use ode::{
    ode_infidelity, BasisState, CoulombModel, DynamicsOptions, GateDynamics, OdeInfidelity, TrajectorySet,
};
pub use schemes::{
    build_sequence, expand_to_kick_train, min_repetition_rate, Kick, KickTrain, PulseGroup, PulseSequence, Scheme,
    SchemeKind, SchemeParams,
};
pub use trap::{
    chi_from_modes, equilibrium_positions, modes_from_chi, normal_modes, spacing_for_chi, Architecture,
    ModeDifference, ModeStructure, TrapConfiguration,
};
