//! Per-basis-state trajectory tables for phase-space and time-domain plots.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fastgate::ode::TrajectoryState;
use fastgate::TrajectorySet;

/// Column names: time, positions, velocities, action phase, then the
/// rotating-frame point (q_p, p_p) of every mode.
pub fn trajectory_columns(modes: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["t", "x1", "x2", "v1", "v2", "phi"].iter().map(|s| s.to_string()).collect();
    for p in 0..modes {
        cols.push(format!("q{}", p + 1));
        cols.push(format!("p{}", p + 1));
    }
    cols
}

/// Reference state at time `t`, cubic Hermite between recorded samples.
fn reference_at(samples: &[TrajectoryState], fallback: &TrajectoryState, t: f64) -> TrajectoryState {
    if samples.len() < 2 {
        return TrajectoryState { t, ..*fallback };
    }
    let i = samples.partition_point(|s| s.t <= t).clamp(1, samples.len() - 1);
    let (a, b) = (&samples[i - 1], &samples[i]);
    let h = b.t - a.t;
    if h <= 0.0 {
        return TrajectoryState { t, ..*b };
    }
    let s = ((t - a.t) / h).clamp(0.0, 1.0);
    let (h00, h10, h01, h11) = (
        (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
        s * (1.0 - s) * (1.0 - s),
        s * s * (3.0 - 2.0 * s),
        s * s * (s - 1.0),
    );
    let mut out = TrajectoryState { t, ..*a };
    for k in 0..2 {
        out.x[k] = h00 * a.x[k] + h10 * h * a.v[k] + h01 * b.x[k] + h11 * h * b.v[k];
        out.v[k] = a.v[k] + s * (b.v[k] - a.v[k]);
    }
    out.phase = a.phase + s * (b.phase - a.phase);
    out
}

/// Rows of one basis-state table. Uses the final state alone when the set
/// was simulated without recording.
pub fn trajectory_rows(set: &TrajectorySet, state: fastgate::BasisState) -> Vec<Vec<f64>> {
    let traj = set.trajectory(state);
    let samples: &[TrajectoryState] =
        if traj.samples.is_empty() { std::slice::from_ref(&traj.final_state) } else { &traj.samples };
    samples
        .iter()
        .map(|s| {
            let r = if s.t >= set.reference.final_state.t {
                set.reference.final_state
            } else {
                reference_at(&set.reference.samples, &set.reference.final_state, s.t)
            };
            let mut row = vec![s.t, s.x[0], s.x[1], s.v[0], s.v[1], s.phase];
            for p in 0..set.mode_frequencies.len() {
                let (q, m) = set.rotating_frame_point(s, &r, p);
                row.push(q);
                row.push(m);
            }
            row
        })
        .collect()
}

/// Writes `<prefix>_<state>.csv` for each basis state into `dir`.
pub fn export_trajectories(set: &TrajectorySet, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let header = trajectory_columns(set.mode_frequencies.len());
    let mut files = Vec::new();
    for (state, _) in &set.basis {
        let path = dir.join(format!("{prefix}_{}.csv", state.label()));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&header)?;
        for row in trajectory_rows(set, *state) {
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush().with_context(|| format!("writing {}", path.display()))?;
        files.push(path);
    }
    Ok(files)
}
