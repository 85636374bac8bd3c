//! `galerkin`: run the probes of `galerkin-core` from a TOML configuration.
//!
//! Each run writes `runs/<timestamp>-<subcommand>/` holding `config.echo`
//! (the fully resolved configuration, itself a valid config file),
//! `verdict.json`, `series.csv` and `timing.json`.
//!
//! Exit status: 0 when the probe passes, 2 when it fails, 1 on usage errors.

mod commands;
mod config;
mod selftest;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use commands::Outcome;
use config::RunConfig;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "galerkin", version, about = "Probes for the Galerkin-truncated stochastic Navier-Stokes equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory that receives the run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the ensemble; trajectory 0 is stored in full.
    Simulate,
    /// Bracket closure of the forced set.
    CheckDetermining,
    /// Rank of the Lie algebra generated by drift and noise.
    HormanderRank,
    /// Ensemble energy against the Gronwall envelope.
    Lyapunov,
    /// Decay of the distance between two ensembles.
    Mixing,
    /// Fraction of a box partition visited over time.
    Support,
    /// Steer the control system from the initial to the target state.
    Steer {
        /// Re-integrate a stored steering verdict (file or run directory) instead of solving.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Energy orthogonality and bracket-oracle self-test.
    DriftSelftest,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::CheckDetermining => "check-determining",
            Command::HormanderRank => "hormander-rank",
            Command::Lyapunov => "lyapunov",
            Command::Mixing => "mixing",
            Command::Support => "support",
            Command::Steer { replay: None } => "steer",
            Command::Steer { replay: Some(_) } => "steer-replay",
            Command::DriftSelftest => "drift-selftest",
        }
    }
}

fn create_run_dir(root: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    for n in 0.. {
        let dir = match n {
            0 => root.join(format!("{stamp}-{name}")),
            _ => root.join(format!("{stamp}-{name}-{n}")),
        };
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
        }
    }
    unreachable!()
}

fn write_outputs(dir: &Path, cfg: &RunConfig, outcome: &Outcome, seconds: f64) -> Result<()> {
    let write = |name: &str, text: &str| {
        std::fs::write(dir.join(name), text).with_context(|| format!("writing {}", dir.join(name).display()))
    };
    write("config.echo", &cfg.to_toml())?;
    write("verdict.json", &serde_json::to_string_pretty(&outcome.verdict)?)?;
    write("series.csv", &outcome.series)?;
    write("timing.json", &serde_json::to_string_pretty(&serde_json::json!({ "wall_time_s": seconds }))?)?;
    for (name, text) in &outcome.extra {
        write(name, text)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let resolved = cfg.resolve().context("invalid configuration")?;
    if let Some(w) = &resolved.warning {
        eprintln!("warning: {w}");
    }
    let start = Instant::now();
    let outcome = match &cli.command {
        Command::Simulate => commands::simulate_cmd(&cfg, &resolved),
        Command::CheckDetermining => commands::check_determining_cmd(&cfg, &resolved),
        Command::HormanderRank => commands::hormander_rank_cmd(&cfg, &resolved),
        Command::Lyapunov => commands::lyapunov_cmd(&cfg, &resolved),
        Command::Mixing => commands::mixing_cmd(&cfg, &resolved),
        Command::Support => commands::support_cmd(&cfg, &resolved),
        Command::Steer { replay: None } => commands::steer_cmd(&cfg, &resolved),
        Command::Steer { replay: Some(p) } => commands::replay_cmd(&cfg, &resolved, p),
        Command::DriftSelftest => commands::drift_selftest_cmd(&cfg, &resolved),
    }?;
    let seconds = start.elapsed().as_secs_f64();
    let dir = create_run_dir(&cli.out, cli.command.name())?;
    write_outputs(&dir, &cfg, &outcome, seconds)?;
    println!("{}: {} ({})", cli.command.name(), if outcome.passed { "PASS" } else { "FAIL" }, outcome.summary);
    println!("{}", dir.display());
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
