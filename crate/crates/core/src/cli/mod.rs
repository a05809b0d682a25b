//! Experiment runner: config parsing, sweep expansion, parallel execution and
//! CSV artifacts.

mod aggregate;
mod parse;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{self, EngineError, RunConfig};
use crate::metrics::MetricsSeries;

pub use aggregate::{aggregate, comparison_csv, group_key, summary_value, AggregateRow, COMPARED_METRICS};
pub use parse::{expand, parse_config, parse_config_str, parse_document, Axis, Entry, ExperimentPlan, Overrides};

#[derive(Debug, Error, PartialEq)]
pub enum CliError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: key `{key}` given more than once")]
    DuplicateKey { key: String, line: usize },
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("cannot read {path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("runs {first} and {second} have identical configs")]
    DuplicateRun { first: usize, second: usize },
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config { key, msg } => CliError::Invalid {
                key: key.to_string(),
                msg,
            },
            other => CliError::Invalid {
                key: "config".into(),
                msg: other.to_string(),
            },
        }
    }
}

/// Outcome of one run in a plan.
#[derive(Debug)]
pub struct RunOutcome {
    pub config_hash: String,
    pub result: Result<RunFiles, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFiles {
    pub csv: PathBuf,
    pub summary: PathBuf,
}

#[derive(Debug)]
pub struct PlanReport {
    pub outcomes: Vec<RunOutcome>,
    pub comparison: Option<PathBuf>,
}

impl PlanReport {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.is_err()).count()
    }

    /// 0 when every run succeeded, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.failures() > 0)
    }
}

pub fn run_csv_path(out_dir: &Path, hash: &str) -> PathBuf {
    out_dir.join(format!("run_{hash}.csv"))
}

pub fn summary_csv_path(out_dir: &Path, hash: &str) -> PathBuf {
    out_dir.join(format!("run_{hash}.summary.csv"))
}

fn write_run(out_dir: &Path, config: &RunConfig, series: &MetricsSeries) -> Result<RunFiles, String> {
    let hash = config.config_hash();
    let csv = run_csv_path(out_dir, &hash);
    let summary = summary_csv_path(out_dir, &hash);
    fs::write(&csv, series.to_csv()).map_err(|e| format!("{}: {e}", csv.display()))?;
    fs::write(&summary, series.summary_csv(config.loss_target)).map_err(|e| format!("{}: {e}", summary.display()))?;
    Ok(RunFiles { csv, summary })
}

/// Runs every config concurrently, writes per-run files and then the
/// comparison table over the successful runs. A failed run does not stop
/// the others.
pub fn execute_plan(plan: &ExperimentPlan) -> std::io::Result<PlanReport> {
    fs::create_dir_all(&plan.out_dir)?;
    let results: Vec<(RunOutcome, Option<(RunConfig, MetricsSeries)>)> = plan
        .runs
        .par_iter()
        .map(|config| {
            let config_hash = config.config_hash();
            match engine::run(config) {
                Ok(series) => {
                    let result = write_run(&plan.out_dir, config, &series);
                    let keep = result.is_ok().then(|| (config.clone(), series));
                    (RunOutcome { config_hash, result }, keep)
                }
                Err(e) => (
                    RunOutcome {
                        config_hash,
                        result: Err(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();
    let mut outcomes = Vec::with_capacity(results.len());
    let mut done = Vec::new();
    for (outcome, keep) in results {
        outcomes.push(outcome);
        done.extend(keep);
    }
    let comparison = if done.is_empty() {
        None
    } else {
        let path = plan.out_dir.join("comparison.csv");
        let pairs: Vec<(&RunConfig, &MetricsSeries)> = done.iter().map(|(c, s)| (c, s)).collect();
        fs::write(&path, comparison_csv(&pairs))?;
        Some(path)
    };
    Ok(PlanReport { outcomes, comparison })
}
