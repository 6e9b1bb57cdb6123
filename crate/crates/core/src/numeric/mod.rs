//! General-purpose optimisation routines used by the gate optimisers.

pub mod lattice;
pub mod lbfgsb;
pub mod levenberg;
pub mod nelder_mead;
