use std::process::ExitCode;

use clap::{Parser, Subcommand};

use insider_forest_cli::commands::{self, *};
use insider_forest_cli::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "insider-forest", version, about = "Classify insider trades as lawful or unlawful")]
struct Cli {
    /// Worker threads for tree fitting and repetitions (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse Form 4 XML filings into a transactions CSV.
    Ingest(IngestArgs),
    /// Label transactions by fuzzy-matching filers against defendant names.
    Label(LabelArgs),
    /// Build a feature table from labeled transactions and quarterly indicators.
    Featurize(FeaturizeArgs),
    /// Generate a planted-signal feature table.
    Synth(SynthArgs),
    /// Fit one random forest.
    Train(TrainArgs),
    /// Random hyperparameter search with k-fold cross-validation.
    Tune(TuneArgs),
    /// Score a saved model on a labeled table.
    Evaluate(EvaluateArgs),
    /// MDI, permutation and decorrelated permutation importance.
    Importance(ImportanceArgs),
    /// Repeated experiments end to end, with all artifacts and the report.
    Run(RunArgs),
    /// Re-render the Markdown report of a finished run.
    Report(ReportArgs),
}

fn dispatch(command: &Command) -> CliResult<()> {
    match command {
        Command::Ingest(a) => {
            let n = commands::ingest(a)?;
            println!("{n} transactions -> {}", a.out.display());
        }
        Command::Label(a) => {
            let (unlawful, total) = commands::label(a)?;
            println!("{unlawful} of {total} transactions labeled unlawful -> {}", a.out.display());
        }
        Command::Featurize(a) => {
            let (rows, dropped) = commands::featurize(a)?;
            println!("{rows} rows ({dropped} dropped) -> {}", a.out.display());
        }
        Command::Synth(a) => {
            let rows = commands::synth(a)?;
            println!("{rows} rows -> {}", a.out.display());
        }
        Command::Train(a) => {
            let oob = commands::train(a)?;
            match oob {
                Some(e) => println!("OOB error {e:.4} -> {}", a.out.display()),
                None => println!("model -> {}", a.out.display()),
            }
        }
        Command::Tune(a) => {
            let (best, score) = commands::tune(a)?;
            println!(
                "best score {score:.4}: ntrees {}, mtry {:?}, depth {:?}, sample rate {} -> {}",
                best.ntrees,
                best.mtry_fraction,
                best.max_depth,
                best.sample_rate,
                a.out.display()
            );
        }
        Command::Evaluate(a) => {
            let ev = commands::evaluate(a)?;
            let show = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
            println!(
                "acc {} tpr {} tnr {} auc {} -> {}",
                show(ev.metrics.acc),
                show(ev.metrics.tpr),
                show(ev.metrics.tnr),
                show(ev.metrics.auc),
                a.out.display()
            );
        }
        Command::Importance(a) => {
            let path = commands::importance(a)?;
            println!("importance -> {}", path.display());
        }
        Command::Run(a) => {
            let summary = commands::run(a)?;
            let acc = summary.aggregate.metrics.get("acc").map(|s| s.mean);
            println!(
                "{} of {} repetitions succeeded, mean accuracy {} -> {}",
                summary.aggregate.reps_succeeded,
                summary.aggregate.reps_requested,
                acc.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}")),
                summary.output_dir.display()
            );
        }
        Command::Report(a) => {
            let path = commands::report(a)?;
            println!("report -> {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.workers {
        Some(0) => Err(CliError::config("--workers must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::config(format!("cannot start worker pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(&cli.command))),
        None => dispatch(&cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code)
        }
    }
}
