use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MissingCitation,
    UndatedCitation,
    FactorReuse,
    CharLimitExceeded,
    InsufficientFactorSignals,
    InsufficientQuestions,
    NewFactorInClosing,
    ToolPermission,
    OrderBreach,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MissingCitation => "missing_citation",
            Self::UndatedCitation => "undated_citation",
            Self::FactorReuse => "factor_reuse",
            Self::CharLimitExceeded => "char_limit_exceeded",
            Self::InsufficientFactorSignals => "insufficient_factor_signals",
            Self::InsufficientQuestions => "insufficient_questions",
            Self::NewFactorInClosing => "new_factor_in_closing",
            Self::ToolPermission => "tool_permission",
            Self::OrderBreach => "order_breach",
        }
    }

    pub fn is_citation(self) -> bool {
        matches!(self, Self::MissingCitation | Self::UndatedCitation)
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Hard,
    Advisory,
}

/// A detected breach of one of the debate policies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub severity: Severity,
    pub step: u8,
    pub detail: String,
}

impl Violation {
    pub fn hard(kind: ViolationKind, step: u8, detail: impl Into<String>) -> Self {
        Self {
            kind,
            severity: Severity::Hard,
            step,
            detail: detail.into(),
        }
    }

    pub fn advisory(kind: ViolationKind, step: u8, detail: impl Into<String>) -> Self {
        Self {
            kind,
            severity: Severity::Advisory,
            step,
            detail: detail.into(),
        }
    }

    pub fn is_hard(&self) -> bool {
        self.severity == Severity::Hard
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Hard => "hard",
            Severity::Advisory => "advisory",
        };
        write!(f, "step {} [{}] {}: {}", self.step, sev, self.kind, self.detail)
    }
}
