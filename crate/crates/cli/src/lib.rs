//! Command-line front end for the gln experiments.
//!
//! ```text
//! gln <experiment> [--preset NAME] [--config FILE] [--set KEY=VALUE]... [flags]
//! gln plotdata <RUN_DIR>
//! ```
//!
//! Configuration is resolved in order: the experiment's preset (or `--config`
//! file), then `--set` overrides, then the dedicated flags.

pub mod config;
pub mod error;
pub mod flat;
pub mod plotdata;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::config::{ExperimentConfig, Task};
use crate::error::{exit, CliError};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  verify: at least one check failed
  2  usage error (unknown subcommand or flag)
  3  invalid config
  4  unreadable dataset
  5  missing or unreadable run artifact
  6  cannot write output
  7  run failed";

#[derive(Debug, Parser)]
#[command(name = "gln", version, about = "Gated linear network experiments", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit exp(-z^2/2) with half-space gated networks (presets: six-layer, two-layer, switching).
    Gaussian(RunArgs),
    /// Exclusive-or negative control.
    Xor(RunArgs),
    /// Three-class spiral with a one-vs-all ensemble.
    Spiral(RunArgs),
    /// One-vs-all MNIST classification (presets: small, full).
    MnistClassify(RunArgs),
    /// Autoregressive density model of binarized MNIST (presets: small, full).
    MnistDensity(RunArgs),
    /// Exact oracle checks of the building blocks.
    Verify(RunArgs),
    /// Write plot data files for a finished run.
    Plotdata {
        /// Run directory.
        dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Named preset to start from.
    #[arg(long)]
    preset: Option<String>,
    /// Flat `key = value` configuration file to start from instead of a preset.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable), e.g. `--set network.epsilon=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of training rounds (synthetic tasks).
    #[arg(long)]
    rounds: Option<u64>,
    /// Directory with the MNIST files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    train_limit: Option<usize>,
    #[arg(long)]
    test_limit: Option<usize>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip writing the model checkpoint.
    #[arg(long)]
    no_checkpoint: bool,
    /// Print the resolved configuration and exit without running.
    #[arg(long)]
    print_config: bool,
}

impl RunArgs {
    fn resolve(&self, experiment: &str) -> Result<ExperimentConfig, CliError> {
        let base = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let cfg = ExperimentConfig::from_text(&text)?;
                if cfg.task.name() != experiment {
                    return Err(CliError::Config(format!(
                        "{} configures {:?}, not {experiment:?}",
                        path.display(),
                        cfg.task.name()
                    )));
                }
                cfg
            }
            None => ExperimentConfig::new(Task::preset(experiment, self.preset.as_deref())?),
        };
        let mut overrides = self
            .set
            .iter()
            .map(|s| flat::parse_assignment(s))
            .collect::<Result<Vec<_>, _>>()?;
        let path = |p: &PathBuf| Value::String(p.to_string_lossy().into_owned());
        let flags = [
            ("seed", self.seed.map(Value::from)),
            ("rounds", self.rounds.map(Value::from)),
            ("data_dir", self.data_dir.as_ref().map(path)),
            ("train_limit", self.train_limit.map(Value::from)),
            ("test_limit", self.test_limit.map(Value::from)),
            ("output_dir", self.out.as_ref().map(path)),
            (
                "checkpoint",
                self.no_checkpoint.then_some(Value::Bool(false)),
            ),
        ];
        overrides.extend(
            flags
                .into_iter()
                .filter_map(|(k, v)| v.map(|v| (k.to_owned(), v))),
        );
        base.with_overrides(&overrides)
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let (experiment, args) = match command {
        Command::Plotdata { dir } => {
            for path in plotdata::emit(&dir)? {
                println!("{}", path.display());
            }
            return Ok(());
        }
        Command::Gaussian(a) => ("gaussian", a),
        Command::Xor(a) => ("xor", a),
        Command::Spiral(a) => ("spiral", a),
        Command::MnistClassify(a) => ("mnist-classify", a),
        Command::MnistDensity(a) => ("mnist-density", a),
        Command::Verify(a) => ("verify", a),
    };
    let cfg = args.resolve(experiment)?;
    if args.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    for line in run::execute(&cfg)? {
        println!("{line}");
    }
    println!("run directory: {}", cfg.output_dir.display());
    Ok(())
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::USAGE
            } else {
                exit::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
