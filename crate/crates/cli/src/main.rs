//! `chispn`: generate data, train, evaluate and query interventional
//! characteristic-function circuits.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use chispn::scm::ModelName;
use chispn::Error;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "chispn", about = "Interventional characteristic-function circuits")]
struct Cli {
    /// Run configuration (JSON); unset fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

fn version() -> String {
    format!("{} (checkpoint schema {})", env!("CARGO_PKG_VERSION"), chispn::SCHEMA_VERSION)
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the training corpus of one structural model.
    Generate(GenerateArgs),
    /// Train a model on a generated corpus.
    Train(TrainArgs),
    /// Density grids, accuracy tables and held-out distances.
    Eval(EvalArgs),
    /// Marginal density of one variable under an intervention.
    Query(QueryArgs),
    /// Summarize a checkpoint.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, env = "CHISPN_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// causal-health, hiring or student.
    #[arg(long)]
    dataset: ModelName,
    /// Rows per intervention.
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long, env = "CHISPN_SEED")]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Corpus directory written by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Total epochs (overrides the configuration and a resumed checkpoint).
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, env = "CHISPN_SEED")]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Corpus whose held-out split is evaluated; fresh data is drawn if unset.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Expected dataset of the checkpoint.
    #[arg(long)]
    dataset: Option<ModelName>,
    /// Also evaluate two-variable interventions.
    #[arg(long)]
    multi: bool,
    /// Pairs such as `C,T`; defaults to the dataset's standard pairs.
    #[arg(long, num_args = 1.., requires = "multi")]
    pairs: Vec<String>,
    #[arg(long, env = "CHISPN_SEED")]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["grid", "point"]))]
struct QueryArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Intervention `VAR=VALUE`; repeat for several.
    #[arg(long = "do", value_name = "VAR=VALUE")]
    interventions: Vec<String>,
    /// Continuous variable to query.
    #[arg(long)]
    var: String,
    /// Print the marginal density over a grid as CSV.
    #[arg(long)]
    grid: bool,
    /// Print the marginal density at one value.
    #[arg(long, allow_hyphen_values = true)]
    point: Option<f64>,
    #[arg(long, env = "CHISPN_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
}

/// 2 configuration, 3 data, 4 numeric failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::NonFiniteLoss { .. } | Error::Numeric(_) | Error::Tape(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().version(&*Box::leak(version().into_boxed_str())).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = config::RunConfig::load(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Generate(a) => commands::generate(cfg, a.dataset, a.rows, a.seed, &a.out.out),
        Command::Train(a) => commands::train(cfg, &a.data, a.resume.as_deref(), a.epochs, a.seed, &a.out.out),
        Command::Eval(a) => commands::eval(
            cfg,
            &a.checkpoint,
            a.data.as_deref(),
            a.dataset,
            a.multi.then_some(a.pairs),
            a.seed,
            &a.out.out,
        ),
        Command::Query(a) => commands::query(cfg, &a.checkpoint, &a.interventions, &a.var, a.point, a.seed),
        Command::Inspect(a) => commands::inspect(&a.checkpoint),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
