//! Batch front end for the `levelset` crate: config-driven experiments and
//! CSV output. Exit codes: 0 pass, 1 violation or non-convergence, 2 bad input.

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use levelset::lemma::PairStrategy;

use crate::commands::{Counterexample, ExpPowerArgs, Status};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "levelset", version, about = "Level-set decay experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify the [lemma] hypothesis and print its envelope constants.
    Constants {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the exponents and regime of the [problem] section.
    Exponents {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check a tabulated psi against the [lemma] hypothesis and its envelope.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// CSV with header "k,psi" or "k,measure".
        #[arg(long)]
        psi: PathBuf,
        #[arg(long, value_enum, default_value_t = Pairs::All)]
        pairs: Pairs,
        /// Number of pairs for `--pairs random`.
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Tabulate a closed-form counterexample and certify that it escapes the envelope.
    Counterexample {
        #[arg(value_enum)]
        name: ExampleName,
        /// Takes A, B, C, D and c1 from its [lemma] section.
        #[arg(long)]
        config: Option<PathBuf>,
        /// C of the exp_power example.
        #[arg(long = "c-exp")]
        c_exp: Option<f64>,
        /// D of the exp_power example.
        #[arg(long = "d-exp")]
        d_exp: Option<f64>,
    },
    /// Minimize on every grid and write field.csv, profile.csv and report.csv.
    Minimize {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to output.directory, then ".".
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the tail of an existing profile.csv.
    Analyze {
        #[arg(long)]
        profile: PathBuf,
        /// Adds the regime-specific fits for its [problem] section.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the experiment for several values of r.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        r: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pairs {
    All,
    Doubling,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExampleName {
    #[value(name = "log_square")]
    LogSquare,
    #[value(name = "exp_power")]
    ExpPower,
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<Status, CliError> {
    match cli.command {
        Command::Constants { config } => commands::constants(&RunConfig::load(&config)?, out),
        Command::Exponents { config } => commands::exponents(&RunConfig::load(&config)?, out),
        Command::Verify {
            config,
            psi,
            pairs,
            count,
            seed,
        } => {
            let strategy = match pairs {
                Pairs::All => PairStrategy::AllKnotPairs,
                Pairs::Doubling => PairStrategy::Doubling,
                Pairs::Random => PairStrategy::RandomPairs { count, seed },
            };
            commands::verify(&RunConfig::load(&config)?, &psi, strategy, out)
        }
        Command::Counterexample {
            name,
            config,
            c_exp,
            d_exp,
        } => {
            let cfg = config.map(|p| RunConfig::load(&p)).transpose()?;
            let name = match name {
                ExampleName::LogSquare => Counterexample::LogSquare,
                ExampleName::ExpPower => Counterexample::ExpPower,
            };
            let lemma = cfg.as_ref().and_then(|c| c.lemma.as_ref());
            commands::counterexample(name, lemma, ExpPowerArgs { c_exp, d_exp }, out)
        }
        Command::Minimize { config, out: dir } => {
            let cfg = RunConfig::load(&config)?;
            let dir = dir
                .or_else(|| cfg.output.directory.clone())
                .unwrap_or_else(|| PathBuf::from("."));
            commands::minimize(&cfg, &dir)
        }
        Command::Analyze { profile, config } => {
            let cfg = config.map(|p| RunConfig::load(&p)).transpose()?;
            commands::analyze(&profile, cfg.as_ref(), out)
        }
        Command::Sweep { config, r } => commands::sweep(&RunConfig::load(&config)?, &r, out),
    }
}

/// Parses the command line, runs the command and maps the outcome to an exit code.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    let result = execute(cli, &mut out);
    let flushed = out.flush();
    match (result, flushed) {
        (Ok(Status::Pass), Ok(())) => ExitCode::SUCCESS,
        (Ok(Status::Fail), Ok(())) => ExitCode::from(1),
        (Err(e), _) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        (_, Err(e)) => {
            eprintln!("error: <stdout>: {e}");
            ExitCode::from(2)
        }
    }
}
