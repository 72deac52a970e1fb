use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::ood::nearest_rank;
use crate::runlog::{HopEvent, HopLog, Stage};
use crate::sim::RunLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopSpec {
    pub name: &'static str,
    pub from: Stage,
    pub to: Stage,
}

/// The four consecutive hops followed by the end-to-end span.
pub const HOPS: [HopSpec; 5] = [
    HopSpec {
        name: "capture_to_ingest",
        from: Stage::Capture,
        to: Stage::Ingest,
    },
    HopSpec {
        name: "detector_exec",
        from: Stage::Ingest,
        to: Stage::DetectDone,
    },
    HopSpec {
        name: "detect_to_estop",
        from: Stage::DetectDone,
        to: Stage::EstopSent,
    },
    HopSpec {
        name: "estop_to_motor",
        from: Stage::EstopSent,
        to: Stage::MotorZeroed,
    },
    HopSpec {
        name: "end_to_end",
        from: Stage::Capture,
        to: Stage::MotorZeroed,
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub name: String,
    pub from: Stage,
    pub to: Stage,
    pub count: usize,
    pub min_ns: u64,
    pub median_ns: f64,
    pub p95_ns: u64,
    pub max_ns: u64,
    pub samples_ns: Vec<u64>,
}

impl StageSummary {
    fn from_samples(spec: &HopSpec, samples: Vec<u64>) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let sorted = {
            let mut s = samples.clone();
            s.sort_unstable();
            s
        };
        let n = sorted.len();
        let median_ns = if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
        };
        Some(Self {
            name: spec.name.to_string(),
            from: spec.from,
            to: spec.to,
            count: n,
            min_ns: sorted[0],
            median_ns,
            p95_ns: sorted[nearest_rank(0.95, n) - 1],
            max_ns: sorted[n - 1],
            samples_ns: samples,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub hops: Vec<StageSummary>,
    /// Hop (excluding the end-to-end span) with the largest median.
    pub dominant: Option<String>,
}

impl TimingSummary {
    pub fn hop(&self, name: &str) -> Option<&StageSummary> {
        self.hops.iter().find(|h| h.name == name)
    }
}

/// Per-hop latency distributions over the stage events of many runs. Each
/// run's events are re-validated, so ordering violations surface as errors.
pub fn timing_report_from_events(runs: &[Vec<HopEvent>]) -> Result<TimingSummary, AnalysisError> {
    if runs.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let logs = runs
        .iter()
        .map(|events| HopLog::from_events(events.iter().cloned()))
        .collect::<Result<Vec<_>, _>>()?;
    for stage in Stage::ALL {
        let seen = logs
            .iter()
            .any(|l| l.events().iter().any(|e| e.stage == stage));
        if !seen {
            return Err(AnalysisError::MissingStage(stage.to_string()));
        }
    }
    let mut hops = Vec::new();
    for spec in &HOPS {
        let samples: Vec<u64> = logs
            .iter()
            .flat_map(|l| {
                l.seqs()
                    .filter_map(move |seq| l.latency(seq, spec.from, spec.to))
            })
            .collect();
        hops.extend(StageSummary::from_samples(spec, samples));
    }
    let dominant = hops
        .iter()
        .filter(|h| h.name != "end_to_end")
        .max_by(|a, b| a.median_ns.total_cmp(&b.median_ns))
        .map(|h| h.name.clone());
    Ok(TimingSummary { hops, dominant })
}

pub fn timing_report(logs: &[RunLog]) -> Result<TimingSummary, AnalysisError> {
    let runs: Vec<Vec<HopEvent>> = logs.iter().map(|l| l.hops.clone()).collect();
    timing_report_from_events(&runs)
}
