//! Command-line driver for the recipient profiling toolkit.
//!
//! `recipro <subcommand> --config run.json` runs one stage of the
//! experiment over every configured dataset, model and seed, or a subset
//! selected with `--dataset`, `--model` and `--seed`. `recipro run` runs
//! all stages in order. Outputs go under the configured output root (or
//! `--out`); logs go to standard error, filtered by `RECIPRO_LOG`.
//!
//! Exit codes: 0 success, 1 invalid configuration or stale upstream stage,
//! 2 data error (including split leakage), 3 internal error.

pub mod config;
pub mod manifest;
pub mod stages;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use recipro_core::error::ErrorKind;

use crate::config::RunConfig;
use crate::manifest::{StageError, StageResult, Store, UnitStatus};
use crate::stages::{Context, Filters};

#[derive(Debug, Parser)]
#[command(name = "recipro", version, about = "Recipient profiling experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse each corpus into canonical records.
    Ingest(StageArgs),
    /// Dataset statistics over cleaned, labeled records.
    Stats(StageArgs),
    /// Clean, chunk, balance and split each dataset.
    Prepare(StageArgs),
    /// Train every model on every dataset for every seed.
    Train(StageArgs),
    /// Score trained models on their own dataset's test split.
    Eval(StageArgs),
    /// Score every model on every dataset's test split.
    Transfer(StageArgs),
    /// Kappa agreement between models on each dataset.
    Agree(StageArgs),
    /// Render tables, charts and the summary.
    Report(StageArgs),
    /// All stages in order.
    Run(StageArgs),
    /// Write the synthetic fixture corpus in canonical form.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct StageArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long = "dataset")]
    pub datasets: Vec<String>,
    #[arg(long = "model")]
    pub models: Vec<String>,
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// Override the configured output root.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Re-run units even when their manifests are current.
    #[arg(long)]
    pub force: bool,
}

impl StageArgs {
    pub fn context(&self) -> StageResult<Context> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output_root = out.clone();
        }
        for id in &self.datasets {
            if cfg.dataset(id).is_none() {
                return Err(recipro_core::Error::Config(format!("unknown dataset {id:?}")).into());
            }
        }
        for id in &self.models {
            if !cfg.models.iter().any(|m| &m.id == id) {
                return Err(recipro_core::Error::Config(format!("unknown model {id:?}")).into());
            }
        }
        for s in &self.seeds {
            if !cfg.seeds.contains(s) {
                return Err(recipro_core::Error::Config(format!("seed {s} is not in the configured seeds")).into());
            }
        }
        let store = Store::new(&cfg.output_root);
        Ok(Context {
            cfg,
            store,
            filters: Filters {
                datasets: self.datasets.clone(),
                models: self.models.clone(),
                seeds: self.seeds.clone(),
            },
            force: self.force,
        })
    }
}

pub fn exit_code(err: &StageError) -> i32 {
    match err {
        StageError::Stale { .. } => 1,
        StageError::Core(e) => match e.kind() {
            ErrorKind::Validation => 1,
            ErrorKind::Data => 2,
            ErrorKind::Internal => 3,
        },
    }
}

pub fn execute(command: &Command) -> StageResult<Vec<UnitStatus>> {
    let (args, stage): (&StageArgs, fn(&Context) -> StageResult<Vec<UnitStatus>>) = match command {
        Command::Ingest(a) => (a, Context::ingest),
        Command::Stats(a) => (a, Context::stats),
        Command::Prepare(a) => (a, Context::prepare),
        Command::Train(a) => (a, Context::train),
        Command::Eval(a) => (a, Context::eval),
        Command::Transfer(a) => (a, Context::transfer),
        Command::Agree(a) => (a, Context::agree),
        Command::Report(a) => (a, Context::report),
        Command::Run(a) => (a, Context::run_all),
        Command::Synth { out, seed } => {
            let cfg = recipro_core::synth::SynthConfig {
                seed: *seed,
                ..Default::default()
            };
            let body = recipro_core::synth::to_canonical_jsonl(&recipro_core::synth::generate(&cfg));
            std::fs::write(out, body).map_err(|e| recipro_core::Error::io(out, e))?;
            return Ok(vec![UnitStatus::Ran]);
        }
    };
    let ctx = args.context()?;
    let status = stage(&ctx)?;
    if !status.is_empty() && status.iter().all(|s| *s == UnitStatus::UpToDate) {
        log::info!("up to date");
    }
    Ok(status)
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(_) => 0,
        Err(e) => {
            log::error!("{e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use recipro_core::Error;

    #[test]
    fn exit_codes() {
        let stale = StageError::Stale {
            stage: "prepare".into(),
            unit: "d".into(),
            reason: "x".into(),
        };
        assert_eq!(exit_code(&stale), 1);
        assert_eq!(exit_code(&Error::Config("x".into()).into()), 1);
        assert_eq!(exit_code(&Error::Leakage(vec!["r1".into()]).into()), 2);
        assert_eq!(exit_code(&Error::DegenerateClass("x".into()).into()), 2);
        let io = Error::io("p", std::io::Error::other("boom"));
        assert_eq!(exit_code(&io.into()), 3);
    }
}
