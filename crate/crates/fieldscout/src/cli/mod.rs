//! Command-line front end.
//!
//! `fieldscout <command>` reads one TOML config and works out of one output
//! directory. Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;

pub use config::{DecisionConfig, ExperimentConfig, ExperimentSection, FieldEntry};

/// Command failures, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// The invocation itself is wrong (exit 1).
    Usage(String),
    /// Inputs or environment are bad: missing files, malformed config,
    /// degenerate fields (exit 2).
    Data(String),
}

#[derive(Debug, Parser)]
#[command(name = "fieldscout", version, about = "Adaptive-resolution aerial survey simulator")]
pub struct Cli {
    /// Experiment config file.
    #[arg(long, global = true, default_value = "fieldscout.toml")]
    pub config: PathBuf,
    /// Output directory; overrides FIELDSCOUT_OUT and the config's
    /// experiment.out_dir.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rasterize every configured synthetic field.
    Generate,
    /// Train a decision state on the training field and save it.
    Init,
    /// Fly one mission over a field raster and write its trace.
    Run {
        /// Strategy label: fixed:<cm_per_px>, non_adaptive, linear, adaptive.
        #[arg(long)]
        strategy: String,
        /// Path to the field raster to fly over.
        #[arg(long)]
        field: PathBuf,
        /// Saved decision state (required by the stateful strategies).
        #[arg(long)]
        state: Option<PathBuf>,
        /// Mission seed; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fly the configured strategy x seed matrix and write CSV tables.
    Compare,
}

/// Full program entry point; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let config = ExperimentConfig::load(&cli.config)?;
    let out = resolve_out(cli.out.clone(), std::env::var_os("FIELDSCOUT_OUT"), &config);
    match &cli.command {
        Command::Generate => commands::cmd_generate(&config, &out),
        Command::Init => commands::cmd_init(&config, &out),
        Command::Run { strategy, field, state, seed } => {
            commands::cmd_run(&config, &out, strategy, field, state.as_deref(), *seed)
        }
        Command::Compare => commands::cmd_compare(&config, &out),
    }
}

/// Output-directory precedence: --out flag, then FIELDSCOUT_OUT, then the
/// config. An empty environment value is ignored.
fn resolve_out(
    flag: Option<PathBuf>,
    env: Option<OsString>,
    config: &ExperimentConfig,
) -> PathBuf {
    if let Some(path) = flag {
        return path;
    }
    if let Some(value) = env {
        if !value.is_empty() {
            return PathBuf::from(value);
        }
    }
    config.experiment.out_dir.clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_dir_precedence() {
        let config = ExperimentConfig::default();
        assert_eq!(
            resolve_out(Some("flag".into()), Some("env".into()), &config),
            PathBuf::from("flag")
        );
        assert_eq!(
            resolve_out(None, Some("env".into()), &config),
            PathBuf::from("env")
        );
        assert_eq!(resolve_out(None, Some("".into()), &config), PathBuf::from("out"));
        assert_eq!(resolve_out(None, None, &config), PathBuf::from("out"));
    }

    #[test]
    fn cli_parses_run_flags() {
        let cli = Cli::try_parse_from([
            "fieldscout",
            "run",
            "--strategy",
            "fixed:3.0",
            "--field",
            "out/testing.pgm",
            "--seed",
            "7",
            "--out",
            "elsewhere",
        ])
        .expect("parse");
        assert_eq!(cli.out, Some(PathBuf::from("elsewhere")));
        assert_eq!(cli.config, PathBuf::from("fieldscout.toml"));
        match cli.command {
            Command::Run { strategy, field, state, seed } => {
                assert_eq!(strategy, "fixed:3.0");
                assert_eq!(field, PathBuf::from("out/testing.pgm"));
                assert_eq!(state, None);
                assert_eq!(seed, Some(7));
            }
            other => panic!("wrong command: {other:?}"),
        }
    }

    #[test]
    fn unknown_subcommand_is_a_parse_error() {
        let err = Cli::try_parse_from(["fieldscout", "frobnicate"]).unwrap_err();
        assert_ne!(err.kind(), ErrorKind::DisplayHelp);
    }
}
