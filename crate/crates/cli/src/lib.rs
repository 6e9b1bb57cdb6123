//! Run manifests, result records and the end-to-end two-phase pipeline.
//!
//! Every stage can run on its own with file handoff, or all of them in
//! sequence through [`run_pipeline`]. A run directory holds a copy of the
//! manifest, the JSON record, CSV tables and a plain-text log.

pub mod export;
pub mod manifest;
pub mod pipeline;
pub mod record;

use std::fmt;

pub use export::{export_trajectories, trajectory_columns};
pub use manifest::RunManifest;
pub use pipeline::{run_pipeline, RunLog};
pub use record::{RateResult, ResultRecord, StageFailure};

/// Pipeline stage, used for error reporting and process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Modes,
    Global,
    Simulate,
    Local,
    Budget,
    Output,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 3,
            Stage::Modes => 4,
            Stage::Global => 5,
            Stage::Simulate => 6,
            Stage::Local => 7,
            Stage::Budget => 8,
            Stage::Output => 9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Modes => "modes",
            Stage::Global => "global",
            Stage::Simulate => "simulate",
            Stage::Local => "local",
            Stage::Budget => "budget",
            Stage::Output => "output",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Marks which stage an error came from.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {:#}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

/// Attaches a stage to any error.
pub trait StageContext<T> {
    fn stage(self, stage: Stage) -> anyhow::Result<T>;
}

impl<T, E> StageContext<T> for Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn stage(self, stage: Stage) -> anyhow::Result<T> {
        self.map_err(|e| StageError { stage, source: e.into() }.into())
    }
}

/// Exit code for an error chain: the first stage found, else 1.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    err.chain().find_map(|e| e.downcast_ref::<StageError>()).map_or(1, |s| s.stage.exit_code())
}
