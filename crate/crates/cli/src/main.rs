//! `onell`: run, compare, ablate, train and export parameter-control
//! policies for the (1+(λ,λ)) GA on OneMax.
//!
//! Exit status: 0 success, 2 usage error, 3 invalid input, 4 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;
mod policies;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Runtime(anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<onell_core::Error> for CliError {
    fn from(e: onell_core::Error) -> Self {
        use onell_core::Error as E;
        match e {
            E::Contract(_) | E::Validation(_) | E::Load(_) => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

#[derive(Parser)]
#[command(name = "onell", version = manifest::version_tag(), about = "Parameter control for the (1+(λ,λ)) GA on OneMax")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// ERT of each policy at each problem size.
    Run(EvalArgs),
    /// Train DDQN policies (best of several repetitions).
    Train(TrainArgs),
    /// Paired comparison table with best / not-significant marks.
    Compare(EvalArgs),
    /// Per-parameter ablation: symbolic composite rows and/or RL masks.
    Ablate(AblateArgs),
    /// Write policy tables and ERT-vs-n plot data.
    Export(EvalArgs),
    /// Desk-scale reproduction of the baseline and derived-policy tables, or
    /// re-render a saved comparison.
    Table(TableArgs),
}

#[derive(Args, Clone, Default)]
pub struct EvalArgs {
    /// JSON manifest; flags override its fields.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Problem sizes (comma separated or repeated).
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Policy id (repeatable).
    #[arg(long = "policy")]
    pub policies: Vec<String>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub master_seed: Option<u64>,
    /// Output root; defaults to $ONELL_OUTPUT_ROOT or ./results.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads, 0 = all cores. Never changes results.
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Significance level for paired tests.
    #[arg(long)]
    pub level: Option<f64>,
    /// Evaluation budget as a multiple of n².
    #[arg(long)]
    pub cutoff_factor: Option<f64>,
}

#[derive(Args, Clone, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Training config JSON (same fields as the manifest's `train` object).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// naive | adaptive_shift
    #[arg(long)]
    pub reward_mode: Option<String>,
    /// combinatorial | factored
    #[arg(long)]
    pub mode: Option<String>,
    /// Controlled parameters, e.g. lambda_m,alpha
    #[arg(long, value_delimiter = ',')]
    pub controlled: Vec<String>,
    #[arg(long)]
    pub master_seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Write a resumable snapshot every this many steps.
    #[arg(long)]
    pub snapshot_every: Option<u64>,
    /// Continue a run from a snapshot written by --snapshot-every.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
pub struct AblateArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Composite row `SRC,SRC,SRC,SRC` in the order lambda_m,alpha,lambda_c,beta (repeatable).
    #[arg(long = "row")]
    pub rows: Vec<String>,
    /// Controlled-parameter set for an RL ablation run, e.g. lambda_m,alpha (repeatable).
    #[arg(long = "mask")]
    pub masks: Vec<String>,
    /// Training config for RL rows.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
pub struct TableArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// baselines | derived
    #[arg(long)]
    pub preset: Option<String>,
    /// Re-render a saved comparison table JSON.
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// text | csv | json
    #[arg(long, default_value = "text")]
    pub format: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Train(a) => commands::train(a),
        Command::Compare(a) => commands::compare(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Export(a) => commands::export(a),
        Command::Table(a) => commands::table(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
