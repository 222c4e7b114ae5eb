use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::ScenarioConfig;
use crate::engine::simulate;
use crate::metrics::{
    aggregate_runs, read_log, write_aggregate, write_log, write_run_files, AggregateReport, RunSummary,
};
use crate::{Error, Result};

pub const AGGREGATE_DIR: &str = "aggregate";
const CONFIG_FILE: &str = "config.toml";

pub fn run_dir_name(index: usize) -> String {
    format!("run-{index:03}")
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub summaries: Vec<RunSummary>,
    /// `None` when no run completed.
    pub aggregate: Option<AggregateReport>,
    /// Runs that hit the virtual-time cap.
    pub incomplete: Vec<usize>,
}

/// Executes every run of `config` (in parallel) and, when `out` is given,
/// writes one directory per run plus the aggregate. Each run directory is
/// written under a temporary name and renamed once complete.
pub fn run_batch(config: &ScenarioConfig, out: Option<&Path>) -> Result<BatchResult> {
    config.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), config.to_toml()?)?;
    }
    let summaries = (0..config.run.runs)
        .into_par_iter()
        .map(|i| -> Result<RunSummary> {
            let spec = config.run_spec(i)?;
            let log = simulate(&spec)?;
            let summary = RunSummary::from_log(&log);
            if let Some(dir) = out {
                let tmp = dir.join(format!(".{}.tmp", run_dir_name(i)));
                let dest = dir.join(run_dir_name(i));
                if tmp.exists() {
                    fs::remove_dir_all(&tmp)?;
                }
                write_log(&tmp, &log)?;
                write_run_files(&tmp, &summary)?;
                if dest.exists() {
                    fs::remove_dir_all(&dest)?;
                }
                fs::rename(&tmp, &dest)?;
            }
            Ok(summary)
        })
        .collect::<Result<Vec<_>>>()?;
    finish(summaries, out)
}

fn finish(summaries: Vec<RunSummary>, out: Option<&Path>) -> Result<BatchResult> {
    let incomplete: Vec<usize> = summaries.iter().filter(|s| !s.complete).map(|s| s.run).collect();
    for r in &incomplete {
        log::warn!("run {r} hit the virtual-time cap and is excluded from the aggregate");
    }
    let aggregate = if incomplete.len() < summaries.len() {
        Some(aggregate_runs(&summaries)?)
    } else {
        None
    };
    if let (Some(dir), Some(a)) = (out, &aggregate) {
        write_aggregate(&dir.join(AGGREGATE_DIR), a)?;
    }
    Ok(BatchResult {
        summaries,
        aggregate,
        incomplete,
    })
}

/// Rebuilds every summary from the logs stored under `dir` and rewrites the
/// aggregate.
pub fn report(dir: &Path) -> Result<BatchResult> {
    let mut runs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("run-"))
        })
        .collect();
    runs.sort();
    if runs.is_empty() {
        return Err(Error::config(format!("no run directories under {}", dir.display())));
    }
    let summaries = runs
        .iter()
        .map(|p| read_log(p).map(|log| RunSummary::from_log(&log)))
        .collect::<Result<Vec<_>>>()?;
    finish(summaries, Some(dir))
}
