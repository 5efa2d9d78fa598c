//! `csqbm`: train, evaluate and sample CSQBM agents from the command line.

mod commands;
mod gradcheck;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use csqbm_core::Error;

/// Exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_TOLERANCE: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "csqbm", version, about = "Continuous semi-quantum Boltzmann machine experiments")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output location: run directory for `train`, file for the others.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an agent; writes config, metrics, checkpoints and a manifest.
    Train {
        /// Config override, `section.key=value`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Greedy rollouts of a checkpoint in the configured environment.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to `run.eval_episodes`.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Draw actions from `p(a | s)` of a checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Clamped state values, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        state: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 20)]
        sweeps: usize,
        /// Print a histogram of the first action coordinate with this many bins.
        #[arg(long)]
        histogram: Option<usize>,
    },
    /// Compare analytic and central-difference gradients on random models.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
    /// Render a learning-curve SVG from a metrics file.
    Plot {
        metrics: PathBuf,
    },
}

/// A failed command: message plus exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::Checkpoint(_) | Error::Json(_) | Error::Csv(_) => EXIT_IO,
            Error::Diverged { .. } | Error::NonFiniteResidual { .. } => EXIT_DIVERGED,
            _ => EXIT_USAGE,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let g = &cli.global;
    let result = match cli.command {
        Command::Train { overrides } => commands::train(g, &overrides),
        Command::Eval { checkpoint, episodes } => commands::eval(g, &checkpoint, episodes),
        Command::Sample { checkpoint, state, count, sweeps, histogram } => {
            commands::sample(g, &checkpoint, &state, count, sweeps, histogram)
        }
        Command::Gradcheck { trials, tolerance } => gradcheck::run(g, trials, tolerance),
        Command::Plot { metrics } => commands::plot(g, &metrics),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
