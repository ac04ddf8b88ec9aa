//! Append-only JSON-lines run journal.
//!
//! Each line is `{"seq", "session", "event", "timing"}`. Everything
//! clock-dependent lives under `timing`, so two scripted runs produce equal
//! lines once that field is dropped.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::roles::RoleId;
use crate::clock::Clock;
use crate::violation::Violation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchOutcomeTag {
    Ok,
    Denied,
    BudgetExhausted,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    RunStarted {
        command: String,
        company_id: String,
        model_id: String,
    },
    StageStarted {
        stage: String,
    },
    StageCompleted {
        stage: String,
    },
    StageFailed {
        stage: String,
        error: String,
    },
    StepStarted {
        step: u8,
        speaker: RoleId,
        context: Vec<u8>,
    },
    Generation {
        role: RoleId,
        step: u8,
        attempt: u8,
        prompt_digest: String,
        response: String,
    },
    Search {
        role: RoleId,
        step: u8,
        query: String,
        outcome: SearchOutcomeTag,
        items: usize,
    },
    Violation {
        violation: Violation,
    },
    StepCompleted {
        step: u8,
    },
    ArtifactWritten {
        path: String,
        digest: String,
    },
    RunCompleted,
    RunAborted {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalLine {
    pub seq: u64,
    pub session: String,
    pub event: Event,
    pub timing: Timing,
}

/// Single-writer journal for one session.
pub struct Journal {
    session: String,
    lines: Vec<JournalLine>,
    sink: Option<File>,
}

impl Journal {
    pub fn in_memory(session: impl Into<String>) -> Self {
        Self {
            session: session.into(),
            lines: Vec::new(),
            sink: None,
        }
    }

    /// Also appends every line to `path` as it is recorded.
    pub fn to_file(session: impl Into<String>, path: &Path) -> std::io::Result<Self> {
        let sink = File::options().create(true).append(true).open(path)?;
        Ok(Self {
            session: session.into(),
            lines: Vec::new(),
            sink: Some(sink),
        })
    }

    pub fn record(&mut self, clock: &dyn Clock, event: Event) {
        self.record_timed(clock, event, None);
    }

    pub fn record_timed(&mut self, clock: &dyn Clock, event: Event, elapsed_seconds: Option<f64>) {
        let line = JournalLine {
            seq: self.lines.len() as u64,
            session: self.session.clone(),
            event,
            timing: Timing {
                at: clock.now(),
                elapsed_seconds,
            },
        };
        if let Some(sink) = &mut self.sink {
            // a journal write failure must not take down the run
            let _ = serde_json::to_writer(&mut *sink, &line)
                .map_err(std::io::Error::from)
                .and_then(|_| sink.write_all(b"\n"))
                .and_then(|_| sink.flush());
        }
        self.lines.push(line);
    }

    pub fn lines(&self) -> &[JournalLine] {
        &self.lines
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.lines.iter().map(|l| &l.event)
    }

    /// Serialized lines with the `timing` field removed.
    pub fn untimed_lines(&self) -> Vec<String> {
        self.lines.iter().map(untimed).collect()
    }

    pub fn read(path: &Path) -> std::io::Result<Vec<JournalLine>> {
        let reader = BufReader::new(File::open(path)?);
        let mut out = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(std::io::Error::from)?);
        }
        Ok(out)
    }
}

pub(crate) fn untimed(line: &JournalLine) -> String {
    serde_json::json!({ "seq": line.seq, "session": line.session, "event": line.event }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{FixedClock, WallClock};

    #[test]
    fn file_sink_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        let clock = WallClock::new();
        let mut j = Journal::to_file("s", &path).unwrap();
        j.record(&clock, Event::StageStarted { stage: "summarize".into() });
        j.record_timed(&clock, Event::StageCompleted { stage: "summarize".into() }, Some(0.5));
        let back = Journal::read(&path).unwrap();
        assert_eq!(back, j.lines());
        assert_eq!(back[1].timing.elapsed_seconds, Some(0.5));
    }

    #[test]
    fn untimed_lines_ignore_clock() {
        let mut a = Journal::in_memory("s");
        let mut b = Journal::in_memory("s");
        a.record(&WallClock::new(), Event::RunCompleted);
        b.record(
            &FixedClock::at_date(chrono::NaiveDate::from_ymd_opt(2001, 1, 1).unwrap()),
            Event::RunCompleted,
        );
        assert_ne!(a.lines(), b.lines());
        assert_eq!(a.untimed_lines(), b.untimed_lines());
    }
}
