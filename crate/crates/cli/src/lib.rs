//! Operator commands for the `situ` binary.

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use situ_core::eval::report::Spread;
use situ_core::eval::MacroPolicy;
use situ_core::tools::SystemVariant;

pub mod commands;
pub mod keyword;
pub mod serve;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SCENARIO: i32 = 3;
pub const EXIT_ALIGNMENT: i32 = 4;
pub const EXIT_PORT_IN_USE: i32 = 5;

/// Environment variable holding vendor credentials. The offline backends
/// never read it.
pub const API_KEY_ENV: &str = "SITU_BACKEND_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn scenario(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_SCENARIO,
            message: message.into(),
        }
    }

    pub fn alignment(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_ALIGNMENT,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "situ", version, about = "Run, replay, score and serve simulated attention sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write its event log, decision trace and view store.
    Run(RunArgs),
    /// Print the transcript of an event log, or re-run a scenario against it.
    Replay(ReplayArgs),
    /// Score decision traces against annotations.
    Eval(EvalArgs),
    /// Print the tool schemas offered to the model.
    Schema(SchemaArgs),
    /// Inter-rater agreement between two annotation files.
    Kappa(KappaArgs),
    /// Serve the operator console API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    #[value(name = "full")]
    Full,
    #[value(name = "no_object")]
    NoObject,
    #[value(name = "no_person")]
    NoPerson,
}

impl From<VariantArg> for SystemVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => SystemVariant::Full,
            VariantArg::NoObject => SystemVariant::NoObject,
            VariantArg::NoPerson => SystemVariant::NoPerson,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Mock,
    Fixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Exclude,
    CountAsZero,
}

impl From<PolicyArg> for MacroPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Exclude => MacroPolicy::Exclude,
            PolicyArg::CountAsZero => MacroPolicy::CountAsZero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpreadArg {
    Categories,
    Scenarios,
}

impl From<SpreadArg> for Spread {
    fn from(s: SpreadArg) -> Self {
        match s {
            SpreadArg::Categories => Spread::Categories,
            SpreadArg::Scenarios => Spread::Scenarios,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long, required_unless_present = "all", conflicts_with = "all")]
    pub scenario: Option<String>,
    /// Run every bundled scenario, one output directory each.
    #[arg(long, conflicts_with_all = ["fixture", "scene"])]
    pub all: bool,
    /// Scene file; defaults to `../scenes/<scene>.json` beside the scenario, then the bundled scene.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "full")]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value = "mock")]
    pub backend: BackendArg,
    /// Event log to replay model outputs from (fixture backend).
    #[arg(long, required_if_eq("backend", "fixture"))]
    pub fixture: Option<PathBuf>,
    /// Overrides the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Event log (NDJSON).
    #[arg(long)]
    pub log: PathBuf,
    /// Re-run this scenario with model outputs taken from the log and compare.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long, requires = "scenario")]
    pub scene: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "full")]
    pub variant: VariantArg,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the regenerated artifacts here.
    #[arg(long, requires = "scenario")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory searched recursively for `trace.json` files.
    #[arg(long, required_unless_present = "counts", conflicts_with = "counts")]
    pub traces: Option<PathBuf>,
    /// Annotation directory holding `<scenario>.json`; bundled annotations when omitted.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Score a table of confusion counts instead of traces.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "exclude")]
    pub policy: PolicyArg,
    #[arg(long, value_enum, default_value = "categories")]
    pub spread: SpreadArg,
}

#[derive(Debug, Args)]
pub struct SchemaArgs {
    #[arg(long, value_enum, default_value = "full")]
    pub variant: VariantArg,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    pub first: PathBuf,
    pub second: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 7878)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Bundled scenario whose scene new sessions use.
    #[arg(long, default_value = "lamp_placement")]
    pub scenario: String,
    #[arg(long, value_enum, default_value = "full")]
    pub variant: VariantArg,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Answer with the scenario's scripted responses instead of keyword rules.
    #[arg(long)]
    pub script: bool,
}

/// Runs one parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Run(a) => commands::run(&a),
        Command::Replay(a) => commands::replay(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Schema(a) => commands::schema(&a),
        Command::Kappa(a) => commands::kappa(&a),
        Command::Serve(a) => serve::run_blocking(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
