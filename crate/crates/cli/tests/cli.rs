use std::path::Path;
use std::process::Command;

use fastgate::{BasisState, CoulombModel, DynamicsOptions, GateDynamics, Scheme, TrapConfiguration};
use fastgate_cli::export::trajectory_rows;
use fastgate_cli::pipeline::{execute, read_sequence_csv, sequence_csv};
use fastgate_cli::{exit_code, export_trajectories, run_pipeline, trajectory_columns, ResultRecord, RunLog, RunManifest, Stage};

fn small_manifest(out: &Path) -> RunManifest {
    let mut m = RunManifest {
        seed: 5,
        out: Some(out.to_path_buf()),
        scheme: Scheme::Gpg(4),
        gate_time: 0.5,
        repetition_rates: vec![2e9],
        epsilons: vec![1e-4, 1e-6],
        ..Default::default()
    };
    m.global.restarts = 4;
    m.global.stages = 2;
    m.local.max_evaluations = 40;
    m.normalize();
    m
}

#[test]
fn pipeline_writes_a_verifiable_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_manifest(dir.path());
    let record = run_pipeline(&m).unwrap();
    for name in ["manifest.toml", "record.json", "budget.csv", "budget.txt", "run.log", "search_log.jsonl", "sequence.csv"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    assert!(record.failure.is_none());
    assert_eq!(record.rates.len(), 1);
    assert_eq!(record.budget.as_ref().unwrap().rows.len(), 2);
    let r = &record.rates[0];
    assert!(r.ode().total <= r.snapped().total);

    // write → read → write is byte-identical, and the load re-evaluates
    let path = dir.path().join("record.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let loaded = ResultRecord::load(&path).unwrap();
    assert_eq!(loaded.to_json().unwrap(), text);
    assert_eq!(loaded, record);

    let copy = RunManifest::load(&dir.path().join("manifest.toml")).unwrap();
    assert_eq!(copy, m);

    let seq = read_sequence_csv(&std::fs::read_to_string(dir.path().join("sequence.csv")).unwrap()).unwrap();
    assert_eq!(seq, record.global.unwrap().sequence);
}

#[test]
fn tampered_record_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let m = RunManifest { repetition_rates: vec![], ..small_manifest(dir.path()) };
    let mut log = RunLog::default();
    let (mut record, err) = execute(&m, &mut log);
    assert!(err.is_none());
    record.verify().unwrap();
    let g = record.global.as_mut().unwrap();
    g.breakdown.total *= 1.0 + 1e-8;
    assert!(record.verify().is_err());
}

#[test]
fn identical_manifests_give_identical_records() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_manifest(dir.path());
    let (a, _) = execute(&m, &mut RunLog::default());
    let (b, _) = execute(&m, &mut RunLog::default());
    assert_eq!(a.without_timing(), b.without_timing());
    assert_eq!(a.without_timing().to_json().unwrap(), b.without_timing().to_json().unwrap());
}

#[test]
fn empty_epsilon_list_skips_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let m = RunManifest { epsilons: vec![], repetition_rates: vec![], ..small_manifest(dir.path()) };
    let (record, err) = execute(&m, &mut RunLog::default());
    assert!(err.is_none());
    assert!(record.budget.is_none());
    assert!(record.notes.iter().any(|n| n.contains("error budget skipped")));
}

#[test]
fn late_failure_keeps_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    // far below any resolving rate
    let m = RunManifest { repetition_rates: vec![1e3], ..small_manifest(dir.path()) };
    let err = run_pipeline(&m).unwrap_err();
    assert_eq!(exit_code(&err), Stage::Local.exit_code());
    let record = ResultRecord::load(&dir.path().join("record.json")).unwrap();
    assert!(record.global.is_some());
    assert!(record.coulomb.is_some());
    assert_eq!(record.failure.unwrap().stage, Stage::Local);
    assert!(std::fs::read_to_string(dir.path().join("run.log")).unwrap().contains("local stage failed"));
}

#[test]
fn invalid_manifest_fails_in_config_stage() {
    let dir = tempfile::tempdir().unwrap();
    let m = RunManifest { gate_time: -1.0, ..small_manifest(dir.path()) };
    let err = run_pipeline(&m).unwrap_err();
    assert_eq!(exit_code(&err), Stage::Config.exit_code());
}

#[test]
fn multi_ion_run_skips_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = small_manifest(dir.path());
    m.trap.ion_count = 3;
    m.gate_time = 1.0;
    m.global.restarts = 8;
    m.global.stages = 3;
    m.normalize();
    let (record, err) = execute(&m, &mut RunLog::default());
    assert!(err.is_none(), "{err:?}");
    assert!(record.coulomb.is_none() && record.rates.is_empty());
    assert!(record.notes.iter().any(|n| n.contains("two ions")));
    assert_eq!(record.budget.unwrap().rows.len(), 1);
}

#[test]
fn sequence_table_round_trips() {
    let seq = fastgate::PulseSequence::new(
        vec![fastgate::PulseGroup { pairs: -3, time: 1.25e-7 }, fastgate::PulseGroup { pairs: 7, time: 3.1e-7 }],
        4e-7,
        0.0,
    )
    .unwrap();
    assert_eq!(read_sequence_csv(&sequence_csv(&seq).unwrap()).unwrap(), seq);
}

fn linear_dynamics() -> GateDynamics {
    GateDynamics::new(&TrapConfiguration::paul_trap(2), CoulombModel::Linearized, DynamicsOptions::default()).unwrap()
}

#[test]
fn export_has_six_plus_two_columns_per_mode() {
    let set = linear_dynamics().simulate(&[(0.3, 2.0), (1.1, -1.0)], 0.0, 2.0, true).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = export_trajectories(&set, dir.path(), "t").unwrap();
    assert_eq!(files.len(), 4);
    let cols = trajectory_columns(2);
    assert_eq!(cols.len(), 10);
    for f in files {
        let mut r = csv::Reader::from_path(f).unwrap();
        assert_eq!(r.headers().unwrap().len(), 6 + 2 * 2);
        assert!(r.records().all(|row| row.unwrap().len() == 10));
    }
}

#[test]
fn empty_train_gives_constant_columns() {
    let set = linear_dynamics().simulate(&[], 0.0, 3.0, true).unwrap();
    for state in BasisState::ALL {
        let rows = trajectory_rows(&set, state);
        assert!(rows.len() > 10);
        for c in 1..10 {
            assert!(rows.iter().all(|r| r[c] == rows[0][c]), "column {c} varies");
        }
    }
}

#[test]
fn rotating_frame_point_closes_on_the_kick_sum() {
    let d = linear_dynamics();
    let kicks = [(0.4, 3.0), (1.3, -5.0), (2.2, 2.0), (2.9, 1.0)];
    let set = d.simulate(&kicks, 0.0, 4.0, true).unwrap();
    let kv = d.kick_velocity();
    for state in BasisState::ALL {
        let s = state.signs();
        let last = trajectory_rows(&set, state).pop().unwrap();
        for p in 0..2 {
            let (w, b) = (set.mode_frequencies[p], set.mode_vectors[p]);
            let (mut re, mut im) = (0.0, 0.0);
            for &(t, z) in &kicks {
                let dm = (b[0] * s[0] + b[1] * s[1]) * z * kv;
                re += dm * (w * t).cos();
                im += dm * (w * t).sin();
            }
            let expected = (re * re + im * im).sqrt() / (2.0 * w).sqrt();
            let got = last[6 + 2 * p].hypot(last[7 + 2 * p]);
            assert!((got - expected).abs() <= 1e-9 * expected.max(1e-3), "{state:?} mode {p}: {got} vs {expected}");
        }
    }
    // centre-of-mass mode sits at the trap frequency
    assert!((set.mode_frequencies[0] - 1.0).abs() < 1e-12);
}

#[test]
fn binary_reports_stage_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_fastgate");
    let dir = tempfile::tempdir().unwrap();
    let ok = Command::new(bin).args(["modes", "--out"]).arg(dir.path()).status().unwrap();
    assert!(ok.success());
    assert!(dir.path().join("modes.json").exists());

    let bad = Command::new(bin).args(["run", "--gate-time=-1", "--out"]).arg(dir.path()).status().unwrap();
    assert_eq!(bad.code(), Some(Stage::Config.exit_code()));

    let missing = Command::new(bin).args(["refine", "--solution", "/nonexistent/x.json", "--out"]).arg(dir.path()).status().unwrap();
    assert_eq!(missing.code(), Some(Stage::Config.exit_code()));
}
