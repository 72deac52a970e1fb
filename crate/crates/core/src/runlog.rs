//! Per-hop stage timestamps and their CSV form
//! (`seq,topic,stage,timestamp_ns`).

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bus::BusError;

pub const CSV_HEADER: &str = "seq,topic,stage,timestamp_ns";

/// Pipeline stages in the order a frame passes through them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Capture,
    Ingest,
    DetectDone,
    EstopSent,
    MotorZeroed,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Capture,
        Stage::Ingest,
        Stage::DetectDone,
        Stage::EstopSent,
        Stage::MotorZeroed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Capture => "capture",
            Stage::Ingest => "ingest",
            Stage::DetectDone => "detect_done",
            Stage::EstopSent => "estop_sent",
            Stage::MotorZeroed => "motor_zeroed",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = BusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| BusError::UnknownStage(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopEvent {
    pub seq: u64,
    pub topic: String,
    pub stage: Stage,
    pub t_ns: u64,
}

/// Append-only stage log that rejects out-of-order stage times per frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HopLog {
    events: Vec<HopEvent>,
    by_seq: BTreeMap<u64, BTreeMap<Stage, u64>>,
}

impl HopLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_events(events: impl IntoIterator<Item = HopEvent>) -> Result<Self, BusError> {
        let mut log = Self::new();
        for e in events {
            log.record(e.seq, &e.topic, e.stage, e.t_ns)?;
        }
        Ok(log)
    }

    pub fn record(
        &mut self,
        seq: u64,
        topic: &str,
        stage: Stage,
        t_ns: u64,
    ) -> Result<(), BusError> {
        let stages = self.by_seq.entry(seq).or_default();
        if stages.contains_key(&stage) {
            return Err(BusError::DuplicateStage {
                seq,
                stage: stage.to_string(),
            });
        }
        for (&other, &other_ns) in stages.iter() {
            let bad = (other < stage && other_ns > t_ns) || (other > stage && other_ns < t_ns);
            if bad {
                return Err(BusError::Ordering {
                    seq,
                    stage: stage.to_string(),
                    t_ns,
                    other: other.to_string(),
                    other_ns,
                });
            }
        }
        stages.insert(stage, t_ns);
        self.events.push(HopEvent {
            seq,
            topic: topic.to_string(),
            stage,
            t_ns,
        });
        Ok(())
    }

    /// Like [`HopLog::record`] with the stage given by name.
    pub fn record_named(
        &mut self,
        seq: u64,
        topic: &str,
        stage: &str,
        t_ns: u64,
    ) -> Result<(), BusError> {
        self.record(seq, topic, stage.parse()?, t_ns)
    }

    pub fn events(&self) -> &[HopEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<HopEvent> {
        self.events
    }

    pub fn stage_time(&self, seq: u64, stage: Stage) -> Option<u64> {
        self.by_seq.get(&seq)?.get(&stage).copied()
    }

    pub fn latency(&self, seq: u64, from: Stage, to: Stage) -> Option<u64> {
        Some(self.stage_time(seq, to)? - self.stage_time(seq, from)?)
    }

    pub fn stages_of(&self, seq: u64) -> Option<&BTreeMap<Stage, u64>> {
        self.by_seq.get(&seq)
    }

    pub fn seqs(&self) -> impl Iterator<Item = u64> + '_ {
        self.by_seq.keys().copied()
    }
}

pub fn write_csv(events: &[HopEvent], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for e in events {
        writeln!(w, "{},{},{},{}", e.seq, e.topic, e.stage, e.t_ns)?;
    }
    Ok(())
}

pub fn to_csv_string(events: &[HopEvent]) -> String {
    let mut buf = Vec::new();
    write_csv(events, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("csv is ascii")
}

pub fn read_csv(r: impl BufRead) -> Result<Vec<HopEvent>, BusError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| BusError::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == CSV_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [seq, topic, stage, t] = fields[..] else {
            return Err(BusError::Parse {
                line: line_no,
                reason: format!("expected 4 fields, got {}", fields.len()),
            });
        };
        let num = |s: &str| {
            s.parse::<u64>().map_err(|e| BusError::Parse {
                line: line_no,
                reason: format!("`{s}`: {e}"),
            })
        };
        out.push(HopEvent {
            seq: num(seq)?,
            topic: topic.to_string(),
            stage: stage.parse()?,
            t_ns: num(t)?,
        });
    }
    Ok(out)
}
