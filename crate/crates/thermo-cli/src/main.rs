//! `thermo`: batch front end for thermo-core.
//!
//! Exit status is 0 on success, 2 for configuration errors, 3 when a computation refuses or
//! fails, and 1 for I/O errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::Command;
use config::{Format, RunConfig};

/// Directory that relative output paths are resolved against.
const OUT_DIR_VAR: &str = "THERMO_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Compute(thermo_core::Error),
    #[error("io: {0}")]
    Io(String),
}

impl From<thermo_core::Error> for CliError {
    fn from(e: thermo_core::Error) -> Self {
        match e {
            thermo_core::Error::InvalidParameter(_) | thermo_core::Error::MalformedMap(_) => CliError::Config(e.to_string()),
            other => CliError::Compute(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "thermo", version, about = "Thermodynamic formalism for piecewise-monotone interval maps")]
struct Cli {
    command: Command,
    /// JSON run configuration; every field is optional.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one field, e.g. `--set params.n_max=12` or `--set map={"family":"full_linear","k":3}`.
    #[arg(long = "set", value_name = "KEY=JSON")]
    set: Vec<String>,
    /// Shorthand for `--set output.path=...`.
    #[arg(short, long)]
    output: Option<String>,
    #[arg(short, long, value_enum)]
    format: Option<Format>,
}

impl clap::ValueEnum for Format {
    fn value_variants<'a>() -> &'a [Self] {
        &[Format::Csv, Format::Json]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }))
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let text = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut sets = cli.set;
    if let Some(o) = cli.output {
        sets.push(format!("output.path={}", serde_json::Value::String(o)));
    }
    if let Some(f) = cli.format {
        sets.push(format!("output.format={}", serde_json::to_string(&f).expect("format serializes")));
    }
    let cfg = RunConfig::resolve(text.as_deref(), &sets)?;
    let echoed = serde_json::to_value(&cfg).expect("config serializes");
    let pretty = serde_json::to_string_pretty(&echoed).expect("config serializes");

    let artifact = commands::run(cli.command, &cfg)?;
    let body = artifact.render(cfg.output.format, &echoed)?;

    match &cfg.output.path {
        Some(path) => {
            let mut target = PathBuf::from(path);
            if target.is_relative() {
                if let Some(dir) = std::env::var_os(OUT_DIR_VAR) {
                    target = PathBuf::from(dir).join(target);
                }
            }
            let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", target.display()));
            if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(io)?;
            }
            std::fs::write(&target, &body).map_err(io)?;
            let mut echo = target.clone().into_os_string();
            echo.push(".config.json");
            std::fs::write(&echo, format!("{pretty}\n")).map_err(io)?;
            print!("{}", artifact.summary_text());
            println!("artifact: {}", target.display());
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&body).map_err(|e| CliError::Io(e.to_string()))?;
            eprint!("{}", artifact.summary_text());
            eprintln!("config: {}", serde_json::to_string(&echoed).expect("config serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("thermo: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
