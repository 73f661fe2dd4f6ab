use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use bearingform::distance::{distance_rigidity_report, DistanceRigidityReport};
use bearingform::io::{self, FormationSpec};
use bearingform::linalg::RANK_TOL;
use bearingform::sim::{self, Mode, SimConfig};
use bearingform::target::{compute_target, feasibility_witness};
use bearingform::{Error, Framework, RigidityReport};

#[derive(Parser)]
#[command(
    name = "bearingform",
    version,
    about = "Bearing rigidity analysis and formation control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Global,
    Local,
}

#[derive(Subcommand)]
enum Command {
    /// Bearing and distance rigidity of the framework in a formation file.
    Analyze {
        spec: PathBuf,
        #[arg(long, default_value_t = RANK_TOL)]
        tol_rank: f64,
    },
    /// Target formation for the file's bearings, centroid and scale.
    Target {
        spec: PathBuf,
        #[arg(long, default_value_t = RANK_TOL)]
        tol_rank: f64,
    },
    /// Simulate the closed loop and write the trajectory as CSV.
    Simulate {
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "global")]
        mode: ModeArg,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stop once two agents come closer than this.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        record_every: usize,
        /// Run `k` independent random starts with seeds `seed..seed+k`.
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Re-check the invariants of a recorded trajectory.
    Verify {
        spec: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
}

enum Failure {
    Error(Error),
    Usage(String),
    ChecksFailed,
    Collision,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!(
                "{}",
                json!({"error": "usage", "message": first.trim_start_matches("error: ")})
            );
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::ChecksFailed) => ExitCode::from(1),
        Err(Failure::Collision) => ExitCode::from(3),
        Err(Failure::Usage(message)) => {
            eprintln!("{}", json!({"error": "usage", "message": message}));
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            let mut line = json!({"error": e.kind(), "message": e.to_string()});
            if let Error::Spec { pointer, message } = &e {
                line["pointer"] = json!(pointer);
                line["message"] = json!(message);
            }
            if let Error::NumericFailure { step } = &e {
                line["step"] = json!(step);
            }
            eprintln!("{line}");
            ExitCode::from(if e.kind() == "numeric" { 2 } else { 1 })
        }
    }
}

fn load(path: &Path) -> Result<FormationSpec, Error> {
    let parsed = io::parse_spec(path)?;
    for w in &parsed.warnings {
        eprintln!("{}", json!({"warning": w}));
    }
    Ok(parsed.spec)
}

fn emit<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    // a closed pipe downstream is not an error of ours
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

#[derive(Serialize)]
struct AnalyzeReport {
    bearing: RigidityReport,
    distance: DistanceRigidityReport,
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Analyze { spec, tol_rank } => {
            let spec = load(&spec)?;
            let p = spec.require_positions()?.clone();
            let f = Framework::new(spec.graph, spec.dimension, p)?;
            emit(&AnalyzeReport {
                bearing: f.rigidity_report(tol_rank)?,
                distance: distance_rigidity_report(&f, tol_rank)?,
            });
        }
        Command::Target { spec, tol_rank } => {
            let spec = load(&spec)?;
            let c = spec.require_constraints()?;
            let p0 = match &spec.positions {
                Some(p) => p.clone(),
                None => feasibility_witness(c, &spec.graph, tol_rank)?
                    .witness
                    .ok_or(Error::Infeasible)?,
            };
            emit(&compute_target(c, &spec.graph, &p0, tol_rank)?);
        }
        Command::Simulate {
            spec,
            mode,
            dt,
            t_end,
            seed,
            gamma,
            out,
            record_every,
            batch,
        } => {
            let spec = load(&spec)?;
            let mode = match mode {
                ModeArg::Global => Mode::Global,
                ModeArg::Local => Mode::Local,
            };
            let base = SimConfig {
                dt,
                t_end,
                mode,
                seed,
                gamma,
                record_every,
            };
            base.validate()?;
            match batch {
                None => simulate_one(&spec, &base, &out)?,
                Some(0) => return Err(Failure::Usage("--batch needs at least one run".into())),
                Some(k) => simulate_batch(&spec, &base, &out, k)?,
            }
        }
        Command::Verify { spec, trace, tol } => {
            let spec = load(&spec)?;
            let table = io::read_trace(&trace, spec.agent_count(), spec.dimension)?;
            let report = io::verify_trace(&spec, &table, tol)?;
            emit(&report);
            if !report.passed {
                return Err(Failure::ChecksFailed);
            }
        }
    }
    Ok(())
}

fn simulate_one(spec: &FormationSpec, cfg: &SimConfig, out: &Path) -> Result<(), Failure> {
    let c = spec.require_constraints()?;
    let init = io::initial_state(spec, cfg.mode, cfg.seed, false)?;
    let trace = sim::integrate(&init, c, &spec.graph, cfg)?;
    let summary = io::write_trace(&trace, cfg, out)?;
    emit(&summary);
    if trace.event.is_some() {
        return Err(Failure::Collision);
    }
    Ok(())
}

fn batch_path(out: &Path, i: usize) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    out.with_file_name(format!("{stem}-{i}.{ext}"))
}

fn simulate_batch(
    spec: &FormationSpec,
    base: &SimConfig,
    out: &Path,
    k: usize,
) -> Result<(), Failure> {
    let c = spec.require_constraints()?;
    let configs: Vec<SimConfig> = (0..k)
        .map(|i| SimConfig {
            seed: base.seed.wrapping_add(i as u64),
            ..base.clone()
        })
        .collect();
    let initials = configs
        .iter()
        .map(|cfg| io::initial_state(spec, cfg.mode, cfg.seed, true))
        .collect::<Result<Vec<_>, _>>()?;
    let results = sim::run_batch(&initials, c, &spec.graph, &configs);
    let mut summaries = Vec::with_capacity(k);
    let mut collided = false;
    for (i, (res, cfg)) in results.into_iter().zip(&configs).enumerate() {
        let trace = res?;
        collided |= trace.event.is_some();
        let summary = io::write_trace(&trace, cfg, batch_path(out, i))?;
        summaries.push(json!({"seed": cfg.seed, "summary": summary}));
    }
    emit(&summaries);
    if collided {
        return Err(Failure::Collision);
    }
    Ok(())
}
