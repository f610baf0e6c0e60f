//! `bleubound` command-line tool.

mod commands;
mod exit;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use exit::CliError;

#[derive(Parser, Debug)]
#[command(name = "bleubound", version, about = "Exact BLEU, its expected-value lower bound, and checks for both")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Largest n-gram order [default: 4; toy: 1]
    #[arg(long, global = true)]
    pub max_order: Option<usize>,
    /// Comma-separated order weights [default: uniform]
    #[arg(long, global = true, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Drop the brevity penalty from exact BLEU
    #[arg(long, global = true)]
    pub no_bp: bool,
    /// Use additively smoothed precisions in the bound
    #[arg(long, global = true)]
    pub smoothing: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Sample count for Monte-Carlo estimates
    #[arg(long, global = true)]
    pub samples: Option<u64>,
    /// Worker threads [default: all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write the result here instead of stdout
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Logits matrix plus reference sentence.
#[derive(Args, Debug, Clone)]
pub struct Instance {
    /// CSV of logits, one row per position
    #[arg(long)]
    pub logits: PathBuf,
    /// Reference sentence: ids, or words with --vocab
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// One token per line; line number is the id and the logits column
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// The logits CSV starts with a header line
    #[arg(long)]
    pub header: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Mc,
    Exhaustive,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sentence and corpus BLEU of line-aligned candidate and reference files
    Bleu {
        #[arg(long)]
        cand: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Fail on candidates shorter than the max order instead of skipping orders
        #[arg(long)]
        strict: bool,
    },
    /// Lower bound on expected BLEU for a logits matrix
    Lb {
        #[command(flatten)]
        instance: Instance,
    },
    /// Expected BLEU by sampling or exhaustive enumeration
    Expected {
        #[command(flatten)]
        instance: Instance,
        #[arg(long, value_enum, default_value_t = Mode::Mc)]
        mode: Mode,
        /// Include the brevity penalty (off by default)
        #[arg(long)]
        bp: bool,
    },
    /// Finite-difference check of the bound gradient on random instances
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 6)]
        max_len: usize,
        #[arg(long, default_value_t = 8)]
        max_vocab: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Add this to one analytic entry per instance (harness self-test)
        #[arg(long, hide = true)]
        corrupt: Option<f64>,
    },
    /// Train random logits on the bound and record learning curves
    Toy(commands::ToyArgs),
    /// Compare exact, bound and REINFORCE gradients on a tiny instance
    CompareGrad(commands::CompareArgs),
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.common.threads)?;
    let common = &cli.common;
    match cli.command {
        Command::Bleu { cand, reference, strict } => commands::bleu(common, &cand, &reference, strict),
        Command::Lb { instance } => commands::lb(common, &instance),
        Command::Expected { instance, mode, bp } => commands::expected(common, &instance, mode, bp),
        Command::Gradcheck {
            instances,
            max_len,
            max_vocab,
            step,
            corrupt,
        } => commands::gradcheck(common, instances, max_len, max_vocab, step, corrupt),
        Command::Toy(args) => commands::toy(common, &args),
        Command::CompareGrad(args) => commands::compare_grad(common, &args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bleubound: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
