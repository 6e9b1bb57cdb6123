use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fastgate::{
    chi_from_modes, error_budget_table, normal_modes, optimize_global, optimize_local, GateDynamics, GateSolution, Scheme,
};
use fastgate_cli::manifest::Overrides;
use fastgate_cli::pipeline::{search_log, sequence_csv};
use fastgate_cli::{exit_code, export_trajectories, run_pipeline, ResultRecord, RunManifest, Stage, StageContext};

/// Fast two-qubit gate design by ultrafast kick sequences.
#[derive(Parser, Debug)]
#[command(name = "fastgate", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run manifest.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Repetition rate (Hz); replaces the manifest's list.
    #[arg(long, global = true)]
    frep: Option<f64>,
    /// gzc, frag, gpg:N or apg:N.
    #[arg(long, global = true)]
    scheme: Option<Scheme>,
    /// Gate time in trap periods.
    #[arg(long, global = true)]
    gate_time: Option<f64>,
    #[arg(long, global = true)]
    ions: Option<usize>,
    /// Target mode difference; uses a two-ion microtrap pair.
    #[arg(long, global = true)]
    chi: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Equilibrium, normal modes and χ.
    Modes,
    /// Phase one: global search under the truncated cost.
    Optimize,
    /// ODE evaluation of a stored solution.
    Simulate {
        /// Solution JSON; defaults to <out>/global.json.
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Also write per-basis-state trajectory tables.
        #[arg(long)]
        export: bool,
    },
    /// Phase two: refinement on the repetition-rate grid.
    Refine {
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Error-budget table for stored solutions.
    Budget {
        /// Solution JSON files; defaults to <out>/global.json.
        #[arg(long, num_args = 1..)]
        solutions: Vec<PathBuf>,
    },
    /// Loads, verifies and summarises a result record.
    Report {
        /// Record JSON; defaults to <out>/record.json.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Every stage in sequence.
    Run,
}

fn manifest(c: &Common) -> Result<RunManifest> {
    let mut m = match &c.config {
        Some(p) => RunManifest::load(p)?,
        None => RunManifest::default(),
    };
    m.apply(&Overrides {
        seed: c.seed,
        out: c.out.clone(),
        repetition_rate: c.frep,
        scheme: c.scheme,
        gate_time: c.gate_time,
        ions: c.ions,
        chi: c.chi,
    });
    m.validate()?;
    Ok(m)
}

fn write(path: &Path, text: String) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn read_solution(path: &Path) -> Result<GateSolution> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn run(cli: Cli) -> Result<()> {
    let m = manifest(&cli.common).stage(Stage::Config)?;
    let out = m.out_dir();
    let solution_path = |p: &Option<PathBuf>| p.clone().unwrap_or_else(|| out.join("global.json"));
    match cli.command {
        Command::Run => {
            let record = run_pipeline(&m)?;
            print!("{}", summary(&record));
        }
        Command::Modes => {
            let trap = m.trap_config().stage(Stage::Modes)?;
            let modes = normal_modes(&trap).stage(Stage::Modes)?;
            for (p, w) in modes.frequencies.iter().enumerate() {
                println!("mode {}: {:.9} w_t", p + 1, w / trap.trap_frequency);
            }
            if trap.ion_count == 2 {
                println!("chi = {:.6e}", chi_from_modes(&modes).stage(Stage::Modes)?.value());
            }
            write(&out.join("modes.json"), json(&modes)?).stage(Stage::Output)?;
        }
        Command::Optimize => {
            let trap = m.trap_config().stage(Stage::Modes)?;
            let modes = normal_modes(&trap).stage(Stage::Modes)?;
            let sol = optimize_global(&m.global, &trap, &modes).stage(Stage::Global)?;
            println!("cost {:.4e}, {} pulse pairs, f_min {:.4e} Hz", sol.cost(), sol.pulse_pairs(), sol.f_min);
            (|| {
                write(&out.join("manifest.toml"), m.to_toml()?)?;
                write(&out.join("global.json"), json(&sol)?)?;
                write(&out.join("search_log.jsonl"), search_log(&sol)?)?;
                write(&out.join("sequence.csv"), sequence_csv(&sol.sequence)?)
            })()
            .stage(Stage::Output)?;
        }
        Command::Simulate { solution, export } => {
            let sol = read_solution(&solution_path(&solution)).stage(Stage::Config)?;
            let trap = m.trap_config().stage(Stage::Modes)?;
            let (set, name) = (|| -> Result<_> {
                match &sol.refinement {
                    Some(r) => {
                        let cfg = m.local_config(r.repetition_rate);
                        let d = GateDynamics::new(&trap, cfg.coulomb, cfg.dynamics)?;
                        let seq = &sol.sequence;
                        Ok((d.simulate_train(&r.train, seq.start, seq.end(), export)?, format!("refined_{:e}", r.repetition_rate)))
                    }
                    None => {
                        let d = GateDynamics::new(&trap, m.check_model, m.local.dynamics)?;
                        Ok((d.simulate_sequence(&sol.sequence, export)?, "phase1".to_string()))
                    }
                }
            })()
            .stage(Stage::Simulate)?;
            let ode = fastgate::ode_infidelity(&set, trap.mean_occupation);
            println!("ODE cost {:.4e} (dphi {:.3e}, dP {:.3e} {:.3e})", ode.total, ode.phase_mismatch, ode.displacements[0], ode.displacements[1]);
            (|| -> Result<()> {
                write(&out.join(format!("simulate_{name}.json")), json(&ode)?)?;
                if export {
                    for f in export_trajectories(&set, &out, &name)? {
                        println!("wrote {}", f.display());
                    }
                }
                Ok(())
            })()
            .stage(Stage::Output)?;
        }
        Command::Refine { solution } => {
            let sol = read_solution(&solution_path(&solution)).stage(Stage::Config)?;
            let trap = m.trap_config().stage(Stage::Modes)?;
            for &rate in &m.repetition_rates {
                let refined = optimize_local(&sol, &trap, &m.local_config(rate))
                    .with_context(|| format!("refining at {rate:e} Hz"))
                    .stage(Stage::Local)?;
                let r = refined.refinement.as_ref().expect("local solutions carry a refinement");
                println!("{rate:e} Hz: snapped {:.4e} -> refined {:.4e}", r.initial_ode.total, r.ode.total);
                write(&out.join(format!("refined_{rate:e}.json")), json(&refined)?).stage(Stage::Output)?;
            }
        }
        Command::Budget { solutions } => {
            let paths = if solutions.is_empty() { vec![solution_path(&None)] } else { solutions };
            let sols = paths.iter().map(|p| read_solution(p)).collect::<Result<Vec<_>>>().stage(Stage::Config)?;
            let trap = m.trap_config().stage(Stage::Modes)?;
            let table = error_budget_table(&sols, &m.epsilons, trap.trap_frequency, m.budget_cutoff).stage(Stage::Budget)?;
            print!("{}", table.render_text());
            (|| {
                write(&out.join("budget.csv"), table.to_csv()?)?;
                write(&out.join("budget.txt"), table.render_text())
            })()
            .stage(Stage::Output)?;
        }
        Command::Report { record } => {
            let path = record.unwrap_or_else(|| out.join("record.json"));
            let r = ResultRecord::load(&path).stage(Stage::Config)?;
            println!("{} verified", path.display());
            print!("{}", summary(&r));
        }
    }
    Ok(())
}

fn summary(r: &ResultRecord) -> String {
    let mut s = String::new();
    if let Some(chi) = r.chi {
        s += &format!("chi                {chi:.4e}\n");
    }
    if let Some(g) = &r.global {
        s += &format!("phase one          {:.3e}  ({} pulse pairs, f_min {:.3e} Hz)\n", g.cost(), g.pulse_pairs(), g.f_min);
    }
    if let Some(c) = &r.coulomb {
        s += &format!("ODE, infinite rate {:.3e}\n", c.total);
    }
    for rate in &r.rates {
        s += &format!("phase two {:.2e}  {:.3e} -> {:.3e}\n", rate.repetition_rate, rate.snapped().total, rate.ode().total);
    }
    if let Some(b) = &r.budget {
        s += &b.render_text();
    }
    for n in &r.notes {
        s += &format!("note: {n}\n");
    }
    if let Some(f) = &r.failure {
        s += &format!("failed in {} stage: {}\n", f.stage, f.message);
    }
    s
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(exit_code(&e));
    }
}
