use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use driftlab::experiment::{configure_threads, run, ExperimentConfig, Format, Overrides, Stage};

#[derive(Parser)]
#[command(name = "driftlab", version, about = "Information drift experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the ensemble and dump the first paths.
    Simulate(Args),
    /// Simulate and compute the drift estimate(s).
    Drift(Args),
    /// Drift plus martingale, bracket and deflator audits.
    Audit(Args),
    /// Drift over refining grids plus the convergence report.
    Converge(Args),
    /// Drift plus the insider strategy backtest.
    Value(Args),
    /// Every stage that applies to the experiment.
    Run(Args),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct Args {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of simulated paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format of tabular artifacts.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Exit with status 1 when any audit entry fails.
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, args) = match cli.command {
        Command::Simulate(a) => (Stage::Simulate, a),
        Command::Drift(a) => (Stage::Drift, a),
        Command::Audit(a) => (Stage::Audit, a),
        Command::Converge(a) => (Stage::Converge, a),
        Command::Value(a) => (Stage::Value, a),
        Command::Run(a) => (Stage::Run, a),
    };
    let overrides = Overrides {
        seed: args.seed,
        n_paths: args.paths,
        output_dir: args.out,
        format: args.format.map(|f| match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }),
        strict: args.strict.then_some(true),
    };
    let result = configure_threads()
        .and_then(|_| ExperimentConfig::from_path(&args.config))
        .and_then(|c| c.apply(&overrides))
        .and_then(|c| run(&c, stage));
    match result {
        Ok(record) => {
            println!("{}", serde_json::to_string_pretty(&record).expect("record serializes"));
            if record.exit_status != 0 {
                eprintln!("driftlab: {} audit entries failed", record.audit_failures);
            }
            ExitCode::from(record.exit_status as u8)
        }
        Err(e) => {
            eprintln!("driftlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
