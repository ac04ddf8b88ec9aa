use std::collections::BTreeSet;

use super::extract::Structure;
use super::schedule::{DebateStepSpec, StepKind};
use crate::guideline::{check_factor_reuse, FactorId, FactorUsageLedger};
use crate::runtime::RoleId;
use crate::violation::{Violation, ViolationKind};

/// What a step saw besides its own text.
#[derive(Debug, Clone, Default)]
pub struct StepSources {
    /// Factors raised in the step's context utterances.
    pub context_factors: BTreeSet<FactorId>,
    /// Sources and URLs of web results fetched during the step.
    pub web_sources: Vec<String>,
}

impl StepSources {
    fn is_web(&self, source: &str) -> bool {
        let s = source.trim().to_lowercase();
        self.web_sources.iter().any(|w| {
            let w = w.trim().to_lowercase();
            !w.is_empty() && (s == w || s.contains(&w) || w.contains(&s))
        })
    }
}

/// Checks one utterance against its step spec and records its factor uses
/// in `ledger`. Tool-permission findings come from the runtime, not here.
pub fn validate_step(
    speaker: RoleId,
    index: u8,
    structure: &Structure,
    spec: &DebateStepSpec,
    ledger: &mut FactorUsageLedger,
    sources: &StepSources,
) -> Vec<Violation> {
    let step = spec.index;
    let mut out = Vec::new();

    if speaker != spec.speaker || index != spec.index {
        out.push(Violation::hard(
            ViolationKind::OrderBreach,
            step,
            format!(
                "expected {} at step {}, got {} at step {}",
                spec.speaker, spec.index, speaker, index
            ),
        ));
    }

    if let Some(limit) = spec.char_limit {
        if structure.body_chars > limit {
            out.push(Violation::advisory(
                ViolationKind::CharLimitExceeded,
                step,
                format!("{} characters, limit {}", structure.body_chars, limit),
            ));
        }
    }

    if let Some(min) = spec.min_factor_signals {
        if structure.factors.len() < min {
            out.push(Violation::advisory(
                ViolationKind::InsufficientFactorSignals,
                step,
                format!("{} factor(s) named, at least {} required", structure.factors.len(), min),
            ));
        }
    }

    if let Some(req) = spec.required_questions {
        if structure.question_count < req {
            out.push(Violation::advisory(
                ViolationKind::InsufficientQuestions,
                step,
                format!("{} question(s), {} required", structure.question_count, req),
            ));
        }
    }

    out.extend(citation_violations(step, spec.kind, structure, sources));

    if spec.kind.argues() {
        if let Some(side) = spec.speaker.team().side() {
            for (factor, fp) in structure.factor_fingerprints() {
                ledger.record_usage(side, factor, fp, step);
            }
            out.extend(
                check_factor_reuse(ledger)
                    .into_iter()
                    .filter(|v| v.step == step),
            );
        }
    }

    if !spec.allow_new_factors {
        for f in &structure.factors {
            if !sources.context_factors.contains(f) {
                out.push(Violation::advisory(
                    ViolationKind::NewFactorInClosing,
                    step,
                    format!("{f} does not appear in the closing's context"),
                ));
            }
        }
    }

    out
}

/// Citation defects. A defect in a web-sourced citation is hard; one in a
/// citation from the pool or of unknown provenance is advisory.
pub fn citation_violations(
    step: u8,
    kind: StepKind,
    structure: &Structure,
    sources: &StepSources,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let used_web = !sources.web_sources.is_empty();
    for c in &structure.citations {
        let web = c.web || c.source.as_deref().is_some_and(|s| sources.is_web(s));
        let severity_for = |hard: bool, kind: ViolationKind, detail: String| {
            if hard {
                Violation::hard(kind, step, detail)
            } else {
                Violation::advisory(kind, step, detail)
            }
        };
        if c.source.is_none() {
            out.push(severity_for(
                web || used_web,
                ViolationKind::MissingCitation,
                format!("citation {} has no source", c.render()),
            ));
        }
        if c.date.is_none() {
            out.push(severity_for(
                web,
                ViolationKind::UndatedCitation,
                format!("citation {} has no date", c.render()),
            ));
        }
    }
    if kind.argues() && structure.citations.is_empty() && !structure.factors.is_empty() {
        out.push(Violation::advisory(
            ViolationKind::MissingCitation,
            step,
            "factors are argued without any citation",
        ));
    }
    out
}
