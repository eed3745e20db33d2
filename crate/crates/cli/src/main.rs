//! `orbits validate|solve|sweep|perturb --config <path> [--out <dir>] [--jobs N]`
//!
//! Exit codes: 0 success, 1 numerical failure, 2 invalid config or model,
//! 3 I/O, 4 property violation (criterion disagreement, audit mismatch).

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use log::info;
use orbits_core::classify::{classify_equivalence, find_minima_full, EquivalenceReport};
use orbits_core::continuation::{global_structure, ReducedFamily};
use orbits_core::perturbation::{monte_carlo_nondegeneracy, MonteCarloConfig};
use orbits_core::{par, MinimizerRecord, OrbitError, ReducedSystem, Result};
use serde::Serialize;
use serde_json::json;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "orbits", version, about = "Minimal periodic orbits on the two-torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model file and report m_L.
    Validate(Args),
    /// Global minimizers and the action profile at one energy.
    Solve(Args),
    /// Branches, crossings and summary over an energy range.
    Sweep(Args),
    /// Monte Carlo over random Fourier perturbations.
    Perturb(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
}

fn exit_code(e: &OrbitError) -> u8 {
    match e {
        OrbitError::InvalidConfig(_)
        | OrbitError::InvalidModel(_)
        | OrbitError::NotPositiveDefinite { .. }
        | OrbitError::Json(_) => 2,
        OrbitError::Io(_) => 3,
        OrbitError::CriterionDisagreement(_) | OrbitError::AuditMismatch { .. } => 4,
        _ => 1,
    }
}

fn error_kind(e: &OrbitError) -> &'static str {
    match e {
        OrbitError::InvalidModel(_) => "InvalidModel",
        OrbitError::NotPositiveDefinite { .. } => "NotPositiveDefinite",
        OrbitError::InvalidConfig(_) => "InvalidConfig",
        OrbitError::NewtonDivergence(_) => "NewtonDivergence",
        OrbitError::EnergyDriftExceeded { .. } => "EnergyDriftExceeded",
        OrbitError::NotClosed(_) => "NotClosed",
        OrbitError::OutsideEnergyShell { .. } => "OutsideEnergyShell",
        OrbitError::BranchViolation(_) => "BranchViolation",
        OrbitError::MomentumSolveFailure { .. } => "MomentumSolveFailure",
        OrbitError::BvpNonConvergence(_) => "BvpNonConvergence",
        OrbitError::StripExit(_) => "StripExit",
        OrbitError::EigenFailure(_) => "EigenFailure",
        OrbitError::NoMinimumFound(_) => "NoMinimumFound",
        OrbitError::CriterionDisagreement(_) => "CriterionDisagreement",
        OrbitError::StepFailure { .. } => "StepFailure",
        OrbitError::AuditMismatch { .. } => "AuditMismatch",
        OrbitError::NonUniqueMinimizer(_) => "NonUniqueMinimizer",
        OrbitError::Io(_) => "Io",
        OrbitError::Json(_) => "Json",
    }
}

fn error_json(e: &OrbitError) -> serde_json::Value {
    let mut v = json!({
        "status": "error",
        "kind": error_kind(e),
        "exit_code": exit_code(e),
        "message": e.to_string(),
    });
    match e {
        OrbitError::NotPositiveDefinite { x1, x2, min_eig } => {
            v["grid_point"] = json!([x1, x2]);
            v["min_eigenvalue"] = json!(min_eig);
        }
        OrbitError::CriterionDisagreement(bundle) => {
            v["diagnostics"] = serde_json::from_str(bundle).unwrap_or(json!(bundle));
        }
        OrbitError::AuditMismatch { energy, x } => {
            v["energy"] = json!(energy);
            v["x"] = json!(x);
        }
        _ => {}
    }
    v
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

struct Run {
    cfg: RunConfig,
    base: PathBuf,
    out: PathBuf,
}

impl Run {
    fn open(args: &Args) -> Result<Self> {
        let (cfg, base) = RunConfig::load(&args.config)?;
        let out = match (&args.out, &cfg.out_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => base.join(o),
            (None, None) => PathBuf::from("orbits-out"),
        };
        Ok(Self { cfg, base, out })
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }
}

fn validate(run: &Run) -> Result<serde_json::Value> {
    let model = run.cfg.model(&run.base)?;
    let r = model.report();
    Ok(json!({
        "status": "ok",
        "m_l": r.m_l,
        "argmin": r.argmin,
        "grid": r.grid,
    }))
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    energy: f64,
    m: usize,
    records: &'a [MinimizerRecord],
    equivalence: Vec<EquivalenceReport>,
}

fn solve(run: &Run) -> Result<serde_json::Value> {
    let energy = run.cfg.require_energy()?;
    let model = run.cfg.model(&run.base)?;
    let rs = ReducedSystem::new(&model, energy, run.cfg.strip(), run.cfg.orientation)?;
    let search = find_minima_full(&rs, &run.cfg.settings())?;
    let dir = run.out_dir()?;
    fs::write(dir.join("profile.csv"), search.profile.to_csv())?;
    let mut equivalence = Vec::new();
    let mut disagreement = None;
    for r in &search.records {
        match classify_equivalence(r, &search.settings) {
            Ok(e) => equivalence.push(e),
            Err(e) => disagreement = disagreement.or(Some(e)),
        }
    }
    write_json(
        dir,
        "minimizers.json",
        &SolveOutput {
            energy,
            m: search.settings.m,
            records: &search.records,
            equivalence,
        },
    )?;
    if let Some(e) = disagreement {
        write_json(dir, "diagnostics.json", &error_json(&e))?;
        return Err(e);
    }
    Ok(json!({
        "status": "ok",
        "minimizers": search.records.len(),
        "verdicts": search.records.iter().map(|r| r.verdict).collect::<Vec<_>>(),
    }))
}

fn sweep(run: &Run) -> Result<serde_json::Value> {
    let (range, de) = run.cfg.require_range()?;
    let model = run.cfg.model(&run.base)?;
    let family = ReducedFamily::new(&model, run.cfg.strip(), run.cfg.orientation);
    let g = global_structure(&family, range, de, &run.cfg.settings())?;
    let dir = run.out_dir()?;
    write_json(
        dir,
        "branches.json",
        &json!({
            "m": g.m,
            "energies": &g.energies,
            "branches": &g.branches,
            "symmetric_ties": &g.symmetric_ties,
            "audits": &g.audits,
            "degenerate_minima": &g.degenerate_minima,
        }),
    )?;
    write_json(dir, "crossings.json", &g.crossings)?;
    fs::write(dir.join("summary.csv"), g.summary_csv())?;
    Ok(json!({
        "status": "ok",
        "branches": g.branches.len(),
        "crossings": g.crossings.len(),
    }))
}

fn perturb(run: &Run) -> Result<serde_json::Value> {
    let n_samples = run
        .cfg
        .n_samples
        .ok_or_else(|| OrbitError::InvalidConfig("perturb needs `n_samples`".into()))?;
    let (energy_range, de) = run.cfg.require_range()?;
    let mc = MonteCarloConfig {
        epsilon: run.cfg.epsilon.unwrap_or(1e-2),
        n_samples,
        energy_range,
        de,
        seed: run.cfg.seed.unwrap_or(0),
    };
    let base = run.cfg.model(&run.base)?;
    let report = monte_carlo_nondegeneracy(&base, &mc, &run.cfg.settings())?;
    let dir = run.out_dir()?;
    write_json(dir, "montecarlo.json", &report)?;
    let mut curve = String::from("threshold,fraction\n");
    for e in -10..=-1 {
        let t = 10f64.powi(e);
        curve.push_str(&format!("{t:e},{:.12}\n", report.fraction_at(t)));
    }
    fs::write(dir.join("thresholds.csv"), curve)?;
    Ok(json!({
        "status": "ok",
        "fraction": report.fraction,
        "ci": report.ci,
        "failures": report.failures.len(),
    }))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ORBITS_LOG", "warn")).init();
    let cli = Cli::parse();
    type Handler = fn(&Run) -> Result<serde_json::Value>;
    let (name, args, handler): (&str, Args, Handler) = match cli.command {
        Command::Validate(a) => ("validate", a, validate),
        Command::Solve(a) => ("solve", a, solve),
        Command::Sweep(a) => ("sweep", a, sweep),
        Command::Perturb(a) => ("perturb", a, perturb),
    };
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            println!("{}", error_json(&OrbitError::InvalidConfig("--jobs must be positive".into())));
            return ExitCode::from(2);
        }
        par::set_jobs(jobs);
    }
    let started = unix_seconds();
    let clock = Instant::now();
    let outcome = Run::open(&args).and_then(|run| {
        let result = handler(&run);
        if name != "validate" && run.out.is_dir() {
            let meta = json!({
                "command": name,
                "config": args.config.display().to_string(),
                "version": env!("CARGO_PKG_VERSION"),
                "jobs": args.jobs,
                "started_unix": started,
                "finished_unix": unix_seconds(),
                "elapsed_seconds": clock.elapsed().as_secs_f64(),
                "succeeded": result.is_ok(),
            });
            write_json(&run.out, "metadata.json", &meta)?;
        }
        result
    });
    match outcome {
        Ok(summary) => {
            info!("{name} finished in {:.2}s", clock.elapsed().as_secs_f64());
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{name}: {e}");
            println!("{}", error_json(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
