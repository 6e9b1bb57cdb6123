use thiserror::Error;

/// Errors raised by the gate-design library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("equilibrium solve did not converge after {iterations} iterations (residual {residual:e})")]
    EquilibriumNotConverged { iterations: usize, residual: f64 },

    #[error("unstable configuration: mode {mode} has non-positive curvature {eigenvalue:e}")]
    UnstableModes { mode: usize, eigenvalue: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("pulse groups {first} and {second} coincide in time; no finite repetition rate resolves them")]
    CoincidentGroups { first: usize, second: usize },

    #[error("groups {first} and {second} collide on the {rate:e} Hz grid at slot {slot}")]
    GridCollision { first: usize, second: usize, slot: i64, rate: f64 },

    #[error("repetition rate {rate:e} Hz is below the minimum resolving rate {min_rate:e} Hz")]
    RateTooLow { rate: f64, min_rate: f64 },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("search budget exceeded: {0}")]
    Budget(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
