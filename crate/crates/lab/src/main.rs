use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heavybrw_lab::{exit, run, ExperimentKind, LabError, RayonRunner, RunConfig};

#[derive(Parser)]
#[command(name = "brwlab", version, about = "Branching random walk experiments driven by TOML configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the standing assumptions for the configured model.
    CheckAssumptions(Common),
    /// Tail of the associated walk in the Nagaev regime.
    Nagaev(Common),
    /// Spine marginal, exponential moment and conditional-frequency checks.
    SpineValidate(Common),
    /// Stopping-line estimator against Nerman's martingale along the grid.
    Theorem(Common),
    /// Error terms of the reduction along the n and T grids.
    ErrorTerms(Common),
    /// Grow one population and write every particle.
    DumpPopulation(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the replicate count.
    #[arg(long)]
    reps: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<String>,
    /// Exit with a distinct code when a check fails.
    #[arg(long)]
    assert: bool,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

fn execute(kind: ExperimentKind, args: &Common) -> Result<(), LabError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = args.reps {
        cfg.reps = reps;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    let runner = RayonRunner::new(args.workers)?;
    let outcome = run(kind, &cfg, &runner, args.assert)?;
    for c in &outcome.report.checks {
        eprintln!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    println!("{}", outcome.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::CheckAssumptions(a) => (ExperimentKind::Assumptions, a),
        Command::Nagaev(a) => (ExperimentKind::Nagaev, a),
        Command::SpineValidate(a) => (ExperimentKind::Spine, a),
        Command::Theorem(a) => (ExperimentKind::Theorem, a),
        Command::ErrorTerms(a) => (ExperimentKind::ErrorTerms, a),
        Command::DumpPopulation(a) => (ExperimentKind::DumpPopulation, a),
    };
    match execute(kind, args) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("brwlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
