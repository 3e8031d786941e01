//! `unsc`: generate data, train, build subspaces, unlearn and evaluate.
//!
//! Exit codes: 0 success, 2 missing artifact, 3 validation failure,
//! 4 numeric failure, 1 anything else. Failures print one JSON line on
//! stderr.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use unsc::Error;

use crate::artifacts::Layout;
use crate::commands::{Context, Method, Outcome};

#[derive(Debug, Parser)]
#[command(name = "unsc", version, about = "Class unlearning with null-space calibration")]
struct Cli {
    /// JSON experiment config; the bundled toy preset when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value by dotted path, e.g. `--set unlearn.lr=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Directory holding the run's artifacts.
    #[arg(long, global = true, default_value = "unsc-run")]
    dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the Gaussian mixture and write data.csv.
    GenData,
    /// Train the original model.
    Train,
    /// Record per-class layer subspaces of the original model.
    Subspace,
    /// Unlearn the configured classes.
    Unlearn {
        #[arg(long, value_enum, default_value = "unsc")]
        method: Method,
    },
    /// Retrain from scratch on the remaining classes.
    Retrain,
    /// Utility and membership inference for one model.
    Evaluate {
        /// original, retrain, unsc, rl, rl+null_space or ga.
        #[arg(long, default_value = "original")]
        model: String,
    },
    /// Loss surface along a null-space and an off-null-space direction.
    Contour,
    /// Five-way comparison: original, retrain, rl, rl+null_space, unsc.
    Ablate,
    /// Join all artifacts of the run into report.json.
    Report,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MissingArtifact(_) => 2,
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::InvalidLabel { .. }
        | Error::Parse { .. }
        | Error::ArtifactMismatch(_)
        | Error::Shape(_)
        | Error::Empty(_)
        | Error::NotOrthonormal { .. }
        | Error::MissingProjector(_) => 3,
        Error::Numeric(_) | Error::NonFinite { .. } => 4,
        Error::Io(_) | Error::Json(_) => 1,
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::MissingArtifact(_) => "missing_artifact",
        Error::Config(_) => "config",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::InvalidLabel { .. } => "invalid_label",
        Error::Parse { .. } => "parse",
        Error::ArtifactMismatch(_) => "artifact_mismatch",
        Error::Shape(_) => "shape",
        Error::Empty(_) => "empty",
        Error::NotOrthonormal { .. } => "not_orthonormal",
        Error::MissingProjector(_) => "missing_projector",
        Error::Numeric(_) => "numeric",
        Error::NonFinite { .. } => "non_finite",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message, "exit_code": code }));
    ExitCode::from(code)
}

fn run(cli: Cli) -> unsc::Result<Outcome> {
    let config = config::load(cli.config.as_deref(), &cli.set)?;
    let ctx = Context { config, layout: Layout::new(cli.dir) };
    match cli.command {
        Command::GenData => ctx.gen_data(),
        Command::Train => ctx.train(),
        Command::Subspace => ctx.subspace(),
        Command::Unlearn { method } => ctx.unlearn(method),
        Command::Retrain => ctx.retrain(),
        Command::Evaluate { model } => ctx.evaluate(&model),
        Command::Contour => ctx.contour(),
        Command::Ablate => ctx.ablate(),
        Command::Report => ctx.report(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            return fail("usage", first, 3);
        }
    };
    match run(cli) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string(&outcome).expect("outcome serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(kind(&e), e.to_string(), exit_code(&e)),
    }
}
