//! Two-phase pipeline: modes → global search → ODE check → local
//! refinement per repetition rate → error budget.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use fastgate::{
    chi_from_modes, error_budget_table, normal_modes, optimize_global, optimize_local, GateDynamics, GateSolution,
    PulseSequence,
};

use crate::export::export_trajectories;
use crate::manifest::RunManifest;
use crate::record::{RateResult, ResultRecord, StageFailure};
use crate::{Stage, StageContext, StageError};

/// Plain-text run log, mirrored to the `log` facade.
#[derive(Debug, Clone, Default)]
pub struct RunLog {
    pub lines: Vec<String>,
}

impl RunLog {
    pub fn info(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::info!("{msg}");
        self.lines.push(msg);
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.lines.push(format!("warning: {msg}"));
    }

    pub fn text(&self) -> String {
        self.lines.iter().fold(String::new(), |mut s, l| {
            let _ = writeln!(s, "{l}");
            s
        })
    }
}

fn timed<T>(record: &mut ResultRecord, key: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    record.timing.insert(key.to_string(), start.elapsed().as_secs_f64());
    out
}

/// Runs every stage in memory. On failure the partial record carries the
/// failed stage and the error is returned alongside it.
pub fn execute(manifest: &RunManifest, log: &mut RunLog) -> (ResultRecord, Option<anyhow::Error>) {
    let mut record = ResultRecord::new(manifest.clone());
    match stages(manifest, &mut record, log) {
        Ok(()) => (record, None),
        Err(e) => {
            let stage = e.chain().find_map(|c| c.downcast_ref::<StageError>()).map_or(Stage::Config, |s| s.stage);
            log.warn(format!("{e:#}"));
            record.failure = Some(StageFailure { stage, message: format!("{e:#}") });
            (record, Some(e))
        }
    }
}

fn stages(manifest: &RunManifest, record: &mut ResultRecord, log: &mut RunLog) -> Result<()> {
    manifest.validate().stage(Stage::Config)?;
    log.info(format!("seed {}, scheme {}, T_G = {} trap periods", manifest.seed, manifest.scheme, manifest.gate_time));

    let (trap, modes) = timed(record, "modes", || {
        let trap = manifest.trap_config()?;
        let modes = normal_modes(&trap)?;
        Ok((trap, modes))
    })
    .stage(Stage::Modes)?;
    record.trap = trap.clone();
    if trap.ion_count == 2 {
        let chi = chi_from_modes(&modes).stage(Stage::Modes)?.value();
        record.chi = Some(chi);
        log.info(format!("chi = {chi:.6e}"));
    }
    log.info(format!("mode frequencies (units of w_t): {:?}", modes.frequencies.iter().map(|w| w / trap.trap_frequency).collect::<Vec<_>>()));
    record.modes = Some(modes.clone());

    let global = timed(record, "global", || Ok(optimize_global(&manifest.global, &trap, &modes)?)).stage(Stage::Global)?;
    log.info(format!(
        "phase one: cost {:.3e} (continuous {:.3e}), {} pulse pairs, f_min {:.4e} Hz",
        global.cost(),
        global.continuous_cost,
        global.pulse_pairs(),
        global.f_min
    ));
    if global.rounding_degraded {
        log.warn("integer rounding degraded the continuous optimum more than tenfold");
    }
    record.global = Some(global.clone());

    if trap.ion_count != 2 {
        record.notes.push(format!("ODE stages skipped: trajectory simulation covers two ions, trap has {}", trap.ion_count));
        log.warn(record.notes.last().unwrap().clone());
    } else {
        let coulomb = timed(record, "simulate", || {
            let dynamics = GateDynamics::new(&trap, manifest.check_model, manifest.local.dynamics)?;
            Ok(dynamics.sequence_infidelity(&global.sequence, trap.mean_occupation)?)
        })
        .stage(Stage::Simulate)?;
        log.info(format!("ODE check at infinite rate: cost {:.3e} (dphi {:.3e})", coulomb.total, coulomb.phase_mismatch));
        record.coulomb = Some(coulomb);

        for &rate in &manifest.repetition_rates {
            let cfg = manifest.local_config(rate);
            let refined = timed(record, &format!("local@{rate:e}"), || Ok(optimize_local(&global, &trap, &cfg)?))
                .with_context(|| format!("refining at {rate:e} Hz"))
                .stage(Stage::Local)?;
            let r = refined.refinement.as_ref().ok_or_else(|| anyhow!("refinement missing")).stage(Stage::Local)?;
            log.info(format!(
                "phase two at {rate:e} Hz: snapped {:.3e} -> refined {:.3e} in {} evaluations{}",
                r.initial_ode.total,
                r.ode.total,
                r.evaluations,
                if r.budget_exhausted { " (budget exhausted)" } else { "" }
            ));
            record.rates.push(RateResult { repetition_rate: rate, refined });
        }
        if manifest.repetition_rates.is_empty() {
            record.notes.push("local refinement skipped: no repetition rates given".into());
        }
    }

    if manifest.epsilons.is_empty() {
        record.notes.push("error budget skipped: no transition errors given".into());
        log.info(record.notes.last().unwrap().clone());
    } else {
        let solutions: Vec<GateSolution> =
            std::iter::once(global.clone()).chain(record.rates.iter().map(|r| r.refined.clone())).collect();
        let budget = timed(record, "budget", || {
            Ok(error_budget_table(&solutions, &manifest.epsilons, trap.trap_frequency, manifest.budget_cutoff)?)
        })
        .stage(Stage::Budget)?;
        record.budget = Some(budget);
    }
    Ok(())
}

/// Writes the run directory: manifest copy, record, tables, log and, when
/// requested, trajectories.
pub fn persist(record: &ResultRecord, log: &RunLog, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        Ok(())
    };
    put("manifest.toml", record.manifest.to_toml()?)?;
    put("record.json", record.to_json()?)?;
    if let Some(global) = &record.global {
        put("search_log.jsonl", search_log(global)?)?;
        put("sequence.csv", sequence_csv(&global.sequence)?)?;
    }
    for r in &record.rates {
        put(&format!("sequence_{:e}.csv", r.repetition_rate), sequence_csv(&r.refined.sequence)?)?;
    }
    if let Some(b) = &record.budget {
        put("budget.csv", b.to_csv()?)?;
        put("budget.txt", b.render_text())?;
    }
    put("run.log", log.text())?;
    if record.manifest.export_trajectories && record.failure.is_none() {
        written.extend(export_record_trajectories(record, dir)?);
    }
    Ok(written)
}

fn export_record_trajectories(record: &ResultRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    let Some(global) = &record.global else { return Ok(Vec::new()) };
    if record.trap.ion_count != 2 {
        return Ok(Vec::new());
    }
    let m = &record.manifest;
    let dynamics = GateDynamics::new(&record.trap, m.check_model, m.local.dynamics)?;
    let mut files = export_trajectories(&dynamics.simulate_sequence(&global.sequence, true)?, dir, "phase1")?;
    for r in &record.rates {
        let Some(refinement) = &r.refined.refinement else { continue };
        let cfg = m.local_config(r.repetition_rate);
        let dynamics = GateDynamics::new(&record.trap, cfg.coulomb, cfg.dynamics)?;
        let seq = &r.refined.sequence;
        let set = dynamics.simulate_train(&refinement.train, seq.start, seq.end(), true)?;
        files.extend(export_trajectories(&set, dir, &format!("refined_{:e}", r.repetition_rate))?);
    }
    Ok(files)
}

/// One JSON object per optimisation stage.
pub fn search_log(solution: &GateSolution) -> Result<String> {
    let mut s = String::new();
    for stage in &solution.metadata.stages {
        s.push_str(&serde_json::to_string(stage)?);
        s.push('\n');
    }
    Ok(s)
}

/// `(z_k, t_k)` rows under a comment line holding the gate window.
pub fn sequence_csv(seq: &PulseSequence) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["z", "t"])?;
    for g in &seq.groups {
        w.write_record([g.pairs.to_string(), format!("{:e}", g.time)])?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?;
    Ok(format!("# gate_time={:e} start={:e}\n{body}", seq.gate_time, seq.start))
}

/// Reads a sequence written by [`sequence_csv`].
pub fn read_sequence_csv(text: &str) -> Result<PulseSequence> {
    let header = text.lines().next().and_then(|l| l.strip_prefix("# ")).context("missing gate-window comment")?;
    let mut gate_time = None;
    let mut start = None;
    for kv in header.split_whitespace() {
        match kv.split_once('=') {
            Some(("gate_time", v)) => gate_time = Some(v.parse::<f64>()?),
            Some(("start", v)) => start = Some(v.parse::<f64>()?),
            _ => {}
        }
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut groups = Vec::new();
    for row in r.records() {
        let row = row?;
        groups.push(fastgate::PulseGroup { pairs: row[0].trim().parse()?, time: row[1].trim().parse()? });
    }
    Ok(PulseSequence::new(groups, gate_time.context("gate_time missing")?, start.context("start missing")?)?)
}

/// Runs the pipeline and writes the run directory, including partial
/// results when a stage fails.
pub fn run_pipeline(manifest: &RunManifest) -> Result<ResultRecord> {
    let mut log = RunLog::default();
    let (record, err) = execute(manifest, &mut log);
    let dir = manifest.out_dir();
    persist(&record, &log, &dir).stage(Stage::Output)?;
    match err {
        Some(e) => Err(e.context(format!("partial results kept in {}", dir.display()))),
        None => Ok(record),
    }
}
