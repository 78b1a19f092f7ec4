//! File-driven workflow around the `cratio` modelling library.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_check, cmd_compare, cmd_fit, cmd_simulate, cmd_summarize, Fit, FitManifest, Overrides};
pub use config::{RunConfig, SchemaConfig, SimFile};
pub use error::{CliError, CliResult};

/// Environment variable with the default worker-thread count.
pub const THREADS_ENV: &str = "CRATIO_THREADS";

#[derive(Debug, Parser)]
#[command(name = "cratio", version, about = "Bayesian regression for bounded days-of-use counts")]
pub struct Cli {
    /// Worker threads for parallel chains (default: $CRATIO_THREADS, else all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model described by a run configuration.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        chains: Option<usize>,
    },
    /// Posterior predictive checks for a fit directory.
    Check {
        fit: PathBuf,
        /// Take `[checks]` and the seed from this configuration instead of the stored one.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// PSIS-LOO comparison of fits on the same data.
    Compare {
        #[arg(required = true)]
        fits: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Odds-ratio report for a fit.
    Summarize {
        fit: PathBuf,
        /// Coefficient to report (`param.column` or a unique column); repeatable.
        #[arg(long = "coef")]
        coefficients: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Simulate a weekly-pattern days-of-use panel.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn thread_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{THREADS_ENV}=`{v}` is not a thread count"))),
        Err(_) => Ok(None),
    }
}

/// Runs one command and returns the text destined for stdout.
pub fn run(cli: Cli) -> CliResult<String> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Internal(format!("cannot start worker threads: {e}")))?;
    pool.install(|| match cli.command {
        Command::Fit { config, output, seed, chains } => cmd_fit(&config, &Overrides { output, seed, chains }),
        Command::Check { fit, config, output, seed } => {
            cmd_check(&fit, config.as_deref(), &Overrides { output, seed, chains: None })
        }
        Command::Compare { fits, output } => cmd_compare(&fits, &output),
        Command::Summarize { fit, coefficients, config, output } => {
            cmd_summarize(&fit, &coefficients, config.as_deref(), output.as_deref())
        }
        Command::Simulate { config, output, seed } => cmd_simulate(&config, &Overrides { output, seed, chains: None }),
    })
}
