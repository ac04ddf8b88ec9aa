use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::extract::{extract_structure, Citation, Structure};
use super::schedule::StepKind;
use crate::guideline::FactorId;
use crate::pool::{CompanyId, EvidenceItem};
use crate::runtime::RoleId;
use crate::violation::Violation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    /// Abort the session on the first hard violation.
    #[default]
    Strict,
    /// Record every violation and carry on.
    RecordOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub index: u8,
    pub speaker: RoleId,
    pub kind: StepKind,
    pub context: Vec<u8>,
    pub text: String,
    pub citations: Vec<Citation>,
    pub factors: Vec<FactorId>,
    pub question_count: usize,
    pub falsifiability_notes: Option<String>,
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub web_evidence: Vec<EvidenceItem>,
    pub elapsed_seconds: f64,
}

impl Utterance {
    /// Re-derives the text structure; stable for a given text.
    pub fn structure(&self) -> Structure {
        extract_structure(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub company_id: CompanyId,
    pub model_id: String,
    pub strictness: Strictness,
    pub as_of: NaiveDate,
    pub recency_days: u32,
    /// Violations not tied to a completed step, such as out-of-order calls.
    pub violations: Vec<Violation>,
    pub started_at: DateTime<Utc>,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Closing {
    pub index: u8,
    pub speaker: RoleId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub session: SessionInfo,
    pub steps: Vec<Utterance>,
    pub closing_pro: Option<Closing>,
    pub closing_con: Option<Closing>,
}

#[derive(Debug, thiserror::Error)]
pub enum TranscriptError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing transcript: {0}")]
    Json(#[from] serde_json::Error),
    #[error("transcript is inconsistent: {0}")]
    Inconsistent(String),
}

impl Transcript {
    pub fn step(&self, index: u8) -> Option<&Utterance> {
        self.steps.iter().find(|u| u.index == index)
    }

    pub fn is_complete(&self) -> bool {
        self.steps.len() == 10
            && self.steps.iter().zip(1..=10u8).all(|(u, i)| u.index == i)
    }

    pub fn violations(&self) -> impl Iterator<Item = &Violation> {
        self.session
            .violations
            .iter()
            .chain(self.steps.iter().flat_map(|u| u.violations.iter()))
    }

    /// Every citation across all steps, in step order.
    pub fn citations(&self) -> impl Iterator<Item = &Citation> {
        self.steps.iter().flat_map(|u| u.citations.iter())
    }

    pub(crate) fn set_closings(&mut self) {
        let closing = |i: u8| {
            self.step(i).map(|u| Closing {
                index: u.index,
                speaker: u.speaker,
                text: u.text.clone(),
            })
        };
        let (pro, con) = (closing(9), closing(10));
        self.closing_pro = pro;
        self.closing_con = con;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }

    pub fn from_json(raw: &str) -> Result<Self, TranscriptError> {
        let t: Transcript = serde_json::from_str(raw)?;
        for (pos, u) in t.steps.iter().enumerate() {
            if u.index as usize != pos + 1 {
                return Err(TranscriptError::Inconsistent(format!(
                    "steps[{pos}] has index {}",
                    u.index
                )));
            }
        }
        for (closing, i) in [(&t.closing_pro, 9u8), (&t.closing_con, 10u8)] {
            if let Some(c) = closing {
                if t.step(i).map(|u| &u.text) != Some(&c.text) {
                    return Err(TranscriptError::Inconsistent(format!(
                        "closing for step {i} does not match the step text"
                    )));
                }
            }
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, TranscriptError> {
        let raw = fs::read_to_string(path).map_err(|source| TranscriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&raw)
    }
}
