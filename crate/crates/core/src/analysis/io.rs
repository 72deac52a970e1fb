use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{stopping_stats_from_logs, AnalysisError, StoppingStats};
use crate::runlog::write_csv;
use crate::sim::{RunLog, RunSummary};

#[derive(Debug, Clone, PartialEq)]
pub struct RunFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
}

/// Writes `run_NNN.csv` (stage events) and `run_NNN.json` (full log).
pub fn write_run(dir: &Path, run: usize, log: &RunLog) -> Result<RunFiles, AnalysisError> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("run_{run:03}.csv"));
    let json = dir.join(format!("run_{run:03}.json"));
    let mut f = std::io::BufWriter::new(fs::File::create(&csv)?);
    write_csv(&log.hops, &mut f)?;
    std::io::Write::flush(&mut f)?;
    fs::write(&json, log.to_json())?;
    Ok(RunFiles { csv, json })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub runs: usize,
    pub frames_scored_min: usize,
    pub frames_scored_max: usize,
    pub stopping: Option<StoppingStats>,
}

/// Writes every run, `summary.jsonl` (one line per run, in run order) and
/// `stats.json`.
pub fn write_campaign(dir: &Path, logs: &[RunLog]) -> Result<CampaignSummary, AnalysisError> {
    if logs.is_empty() {
        return Err(AnalysisError::Empty);
    }
    fs::create_dir_all(dir)?;
    let mut lines = String::new();
    for (i, log) in logs.iter().enumerate() {
        write_run(dir, i, log)?;
        lines.push_str(
            &serde_json::to_string(&RunSummary::from_log(i, log)).expect("summary serialises"),
        );
        lines.push('\n');
    }
    fs::write(dir.join("summary.jsonl"), lines)?;
    let scored = logs.iter().map(|l| l.outcome.frames_scored);
    let summary = CampaignSummary {
        runs: logs.len(),
        frames_scored_min: scored.clone().min().unwrap_or(0),
        frames_scored_max: scored.max().unwrap_or(0),
        stopping: stopping_stats_from_logs(logs).ok(),
    };
    fs::write(
        dir.join("stats.json"),
        serde_json::to_string_pretty(&summary).expect("stats serialise") + "\n",
    )?;
    Ok(summary)
}

fn bad(path: &Path, reason: impl ToString) -> AnalysisError {
    AnalysisError::BadLog {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

/// Loads every `run_*.json` in `dir`, ordered by file name.
pub fn read_run_logs(dir: &Path) -> Result<Vec<RunLog>, AnalysisError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| bad(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("run_") && name.ends_with(".json")
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(bad(dir, "no run_*.json files"));
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| bad(p, e))?;
            RunLog::from_json(&text).map_err(|e| bad(p, e))
        })
        .collect()
}

pub fn read_summaries(path: &Path) -> Result<Vec<RunSummary>, AnalysisError> {
    let text = fs::read_to_string(path).map_err(|e| bad(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| bad(path, e)))
        .collect()
}
