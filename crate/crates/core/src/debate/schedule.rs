use serde::{Deserialize, Serialize};

use crate::runtime::RoleId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Constructive,
    CrossExamination,
    Rebuttal,
    Closing,
}

impl StepKind {
    /// Steps whose factor uses go into the reuse ledger.
    pub fn argues(self) -> bool {
        matches!(self, Self::Constructive | Self::Rebuttal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DebateStepSpec {
    pub index: u8,
    pub speaker: RoleId,
    pub kind: StepKind,
    /// Prior steps whose text is injected, in prompt order.
    pub context: &'static [u8],
    pub char_limit: Option<usize>,
    pub min_factor_signals: Option<usize>,
    pub required_questions: Option<usize>,
    pub allow_new_factors: bool,
}

const fn step(
    index: u8,
    speaker: RoleId,
    kind: StepKind,
    context: &'static [u8],
    char_limit: Option<usize>,
) -> DebateStepSpec {
    let (min_factor_signals, required_questions) = match kind {
        StepKind::Constructive => (Some(3), None),
        StepKind::CrossExamination => (None, Some(3)),
        _ => (None, None),
    };
    DebateStepSpec {
        index,
        speaker,
        kind,
        context,
        char_limit,
        min_factor_signals,
        required_questions,
        allow_new_factors: !matches!(kind, StepKind::Closing),
    }
}

use RoleId::*;
use StepKind::*;

/// The fixed ten-turn speaking order.
pub static SCHEDULE: [DebateStepSpec; 10] = [
    step(1, A1, Constructive, &[], Some(600)),
    step(2, N3, CrossExamination, &[1], None),
    step(3, N1, Constructive, &[], Some(600)),
    step(4, A3, CrossExamination, &[3], None),
    step(5, A2, Rebuttal, &[3], Some(400)),
    step(6, N1, CrossExamination, &[5], None),
    step(7, N2, Rebuttal, &[1], Some(400)),
    step(8, A1, CrossExamination, &[7], None),
    step(9, A3, Closing, &[1, 2, 5, 8], Some(600)),
    step(10, N3, Closing, &[3, 4, 7, 6], Some(600)),
];

pub fn step_spec(index: u8) -> Option<&'static DebateStepSpec> {
    SCHEDULE.get((index as usize).checked_sub(1)?)
}

/// (speaker, step) pairs a scripted transcript must cover.
pub fn scripted_keys() -> Vec<(RoleId, u8)> {
    SCHEDULE.iter().map(|s| (s.speaker, s.index)).collect()
}
