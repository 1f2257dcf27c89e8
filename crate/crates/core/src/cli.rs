//! Command-line front end: `run`, `experiment` and `validate-config`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{CommandFactory, Parser, Subcommand};

use crate::engine;
use crate::harness::{self, ExperimentConfig, HarnessError};
use crate::metrics::MetricsRecord;
use crate::mobility::ModelKind;

/// Exit status for malformed invocations.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for runtime failures.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "swarmcov", version, about = "Drone swarm area-coverage simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one run and print its metrics row.
    Run {
        /// random | dpr | connectivity | khopca | conncov
        #[arg(long, value_parser = parse_model)]
        model: ModelKind,
        /// Number of mobile UAVs (the root is extra).
        #[arg(long)]
        uavs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write a per-second position trace to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Experiment config supplying field, range and interval overrides.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a full sweep and write the figure tables.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Maximum concurrent runs.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check a config file and exit.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: crate::mobility::UnknownModel| e.to_string())
}

/// Header matching the row printed by `run`.
pub fn run_row_header() -> String {
    format!("model,n_uavs,seed,{}", MetricsRecord::CSV_HEADER)
}

/// Parses `argv` (program name first) and executes the subcommand, writing
/// machine output to `out` and diagnostics to `err`. Returns the exit status.
pub fn parse_and_dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { out } else { err };
            let _ = write!(sink, "{rendered}");
            if code != 0 && !rendered.contains("Usage:") {
                let _ = writeln!(sink, "\n{}", Cli::command().render_usage());
            }
            return if code == 0 { 0 } else { EXIT_USAGE };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig, HarnessError> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Write {
        path: path.to_owned(),
        source,
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), HarnessError> {
    match command {
        Command::Run {
            model,
            uavs,
            seed,
            trace,
            config,
        } => {
            let cfg = load_config(config.as_ref())?.run_config(model, uavs, seed);
            let record = match &trace {
                Some(path) => {
                    let file = File::create(path).map_err(io_err(path))?;
                    let mut w = BufWriter::new(file);
                    let r = engine::run_traced(&cfg, &mut w)?;
                    w.flush().map_err(io_err(path))?;
                    r
                }
                None => engine::run(&cfg)?,
            };
            let _ = writeln!(err, "{}", run_row_header());
            writeln!(out, "{model},{uavs},{seed},{}", record.csv_fields()).map_err(io_err("stdout".as_ref()))?;
            let _ = writeln!(
                err,
                "{model}: {} UAVs, stopped at {} s ({}), coverage 80% at {:?} s, 95% at {:?} s",
                uavs,
                record.stop_time,
                if record.censored { "censored" } else { "complete" },
                record.time_to_80,
                record.time_to_95
            );
            Ok(())
        }
        Command::Experiment { config, out: dir, jobs } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(dir) = dir {
                cfg.experiments.output_dir = dir;
            }
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let results = harness::run_experiment(&cfg, jobs)?;
            let written = harness::emit_tables(&results, &cfg.experiments.output_dir)?;
            for path in written {
                writeln!(out, "{}", path.display()).map_err(io_err("stdout".as_ref()))?;
            }
            let _ = writeln!(err, "{} runs completed", results.runs.len());
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate()?;
            writeln!(out, "ok").map_err(io_err("stdout".as_ref()))?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invoke(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let argv = std::iter::once("swarmcov").chain(args.iter().copied());
        let code = parse_and_dispatch(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn unknown_model_is_usage_error() {
        let (code, _, err) = invoke(&["run", "--model", "nope", "--uavs", "4"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("Usage"), "{err}");
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(
            invoke(&["run", "--model", "random", "--uavs", "4", "--bogus"]).0,
            EXIT_USAGE
        );
        assert_eq!(invoke(&[]).0, EXIT_USAGE);
    }

    #[test]
    fn missing_config_is_runtime_failure() {
        let (code, _, _) = invoke(&["validate-config", "--config", "/nonexistent/cfg.toml"]);
        assert_eq!(code, EXIT_FAILURE);
    }
}
