use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use langevin_exit::harness::{run, ConfigFile, ExperimentKind, RunOptions};

#[derive(Parser)]
#[command(name = "langevin-exit", version = langevin_exit::harness::VERSION, about = "Exit-point analysis for overdamped Langevin dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Critical points, wells, saddles and assumption verdicts.
    Analyze(Args),
    /// Predicted exit law from the landscape.
    Theory(Args),
    /// Monte Carlo exit histograms.
    Simulate(Args),
    /// Grid solves for exit probabilities and the principal eigenpair.
    Solve(Args),
    /// Theory, Monte Carlo, grid solves and the 1D oracle side by side.
    Verify(Args),
    /// Minimum-action path between two points.
    Action(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (defaults to the config's `output_dir`, then `out`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the Monte Carlo seed of every experiment.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Analyze(a) => (ExperimentKind::Analyze, a),
        Command::Theory(a) => (ExperimentKind::Theory, a),
        Command::Simulate(a) => (ExperimentKind::Simulate, a),
        Command::Solve(a) => (ExperimentKind::Solve, a),
        Command::Verify(a) => (ExperimentKind::Verify, a),
        Command::Action(a) => (ExperimentKind::Action, a),
    };
    if let Some(n) = args.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let cfg = ConfigFile::parse(&text).with_context(|| format!("in {}", args.config.display()))?;
    let opts = RunOptions {
        seed: args.seed,
        kind: Some(kind),
    };
    let (report, artifacts) = run(&cfg, &opts)?;
    let out = args
        .out
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    report
        .write(&out, &artifacts)
        .with_context(|| format!("writing results to {}", out.display()))?;
    let mut failed = false;
    for exp in &report.experiments {
        let verdicts: Vec<_> = exp.temperatures.iter().flat_map(|t| &t.verdicts).collect();
        let passed = verdicts.iter().filter(|v| v.pass).count();
        println!(
            "{}: {} temperature(s), {passed}/{} region verdicts pass, {} warning(s), {} error(s)",
            exp.name,
            exp.temperatures.len(),
            verdicts.len(),
            exp.warnings.len(),
            exp.errors.len()
        );
        if let Some(e) = &exp.theory_error {
            println!("  theory: {e}");
        }
        for e in &exp.errors {
            eprintln!("  error: {e}");
            failed = true;
        }
    }
    println!("report written to {}", out.join("report.json").display());
    if failed {
        std::process::exit(1);
    }
    Ok(())
}
