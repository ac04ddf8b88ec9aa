//! The ten-factor non-financial evaluation guideline and the factor-reuse
//! review ledger.
//!
//! The factor table is the single source of truth for prompt rendering,
//! structure extraction and validation. [`factor_table_json`] exports it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::violation::{Violation, ViolationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorId {
    IndustryGrowthOutlook,
    CompetitionIntensity,
    TechnologicalDisruptionRisk,
    EconomicCyclicality,
    GovernmentSupport,
    InternalControlRisk,
    ManagerialContinuity,
    EmploymentStability,
    CertificationStatus,
    SearchVolumeTrend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalPolarity {
    Favorable,
    Adverse,
    ContextDependent,
}

impl SignalPolarity {
    /// The `(+)` / `(-)` marker used in prompts.
    pub fn marker(self) -> &'static str {
        match self {
            Self::Favorable => "(+)",
            Self::Adverse => "(-)",
            Self::ContextDependent => "(+/-)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    Higher,
    Lower,
    Present,
    Absent,
    Increasing,
    Decreasing,
    MoreStable,
    LessStable,
}

impl FromStr for Observation {
    type Err = GuidelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Ok(match norm.as_str() {
            "higher" | "stronger" | "greater" | "more_sensitive" => Self::Higher,
            "lower" | "weaker" | "smaller" | "less_sensitive" => Self::Lower,
            "present" | "presence" => Self::Present,
            "absent" | "absence" => Self::Absent,
            "increasing" => Self::Increasing,
            "decreasing" => Self::Decreasing,
            "more_stable" => Self::MoreStable,
            "less_stable" => Self::LessStable,
            _ => return Err(GuidelineError::UnknownObservation(s.to_string())),
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GuidelineError {
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("unknown observation `{0}`")]
    UnknownObservation(String),
    #[error("observation {observation:?} does not apply to factor {factor}")]
    Inapplicable {
        factor: FactorId,
        observation: Observation,
    },
}

/// One row of the guideline table.
#[derive(Debug)]
pub struct FactorSpec {
    pub id: FactorId,
    pub name: &'static str,
    pub criterion: &'static str,
    pub rules: &'static [(Observation, SignalPolarity)],
    /// Lower-case phrases recognized in free text, English and Korean.
    pub aliases: &'static [&'static str],
}

use Observation as O;
use SignalPolarity as P;

static FACTOR_TABLE: [FactorSpec; 10] = [
    FactorSpec {
        id: FactorId::IndustryGrowthOutlook,
        name: "Industry Growth Outlook",
        criterion: "Higher = (+)",
        rules: &[(O::Higher, P::Favorable), (O::Lower, P::Adverse)],
        aliases: &[
            "industry growth outlook",
            "industrial growth outlook",
            "industry growth",
            "market growth",
            "산업 성장",
            "산업성장",
        ],
    },
    FactorSpec {
        id: FactorId::CompetitionIntensity,
        name: "Industry Competitive Intensity",
        criterion: "Stronger = (-)",
        rules: &[(O::Higher, P::Adverse), (O::Lower, P::Favorable)],
        aliases: &[
            "industry competitive intensity",
            "competitive intensity",
            "competition intensity",
            "intensity of competition",
            "market competition",
            "industry competition",
            "경쟁 강도",
            "경쟁강도",
        ],
    },
    FactorSpec {
        id: FactorId::TechnologicalDisruptionRisk,
        name: "Technological Disruption Risk",
        criterion: "Higher = (-)",
        rules: &[(O::Higher, P::Adverse), (O::Lower, P::Favorable)],
        aliases: &[
            "technological disruption risk",
            "technological disruption",
            "technological change",
            "technology disruption",
            "기술 변화",
            "기술변화",
        ],
    },
    FactorSpec {
        id: FactorId::EconomicCyclicality,
        name: "Economic Cyclicality",
        criterion: "Higher sensitivity = (-)",
        rules: &[(O::Higher, P::Adverse), (O::Lower, P::Favorable)],
        aliases: &[
            "economic cyclicality",
            "economic cyclicalities",
            "economic sensitivity",
            "business cyclical",
            "cyclicality",
            "경기 민감",
            "경기민감",
        ],
    },
    FactorSpec {
        id: FactorId::GovernmentSupport,
        name: "Government Support Programs",
        criterion: "Presence = (+)",
        rules: &[(O::Present, P::Favorable), (O::Absent, P::ContextDependent)],
        aliases: &[
            "government support programs",
            "government support program",
            "government support",
            "policy support",
            "정부 지원",
            "정부지원",
        ],
    },
    FactorSpec {
        id: FactorId::InternalControlRisk,
        name: "Internal Control Risk",
        criterion: "Higher = (-)",
        rules: &[(O::Higher, P::Adverse), (O::Lower, P::Favorable)],
        aliases: &["internal control risk", "internal control", "내부 통제", "내부통제"],
    },
    FactorSpec {
        id: FactorId::ManagerialContinuity,
        name: "Management Continuity",
        criterion: "More stable = (+)",
        rules: &[(O::MoreStable, P::Favorable), (O::LessStable, P::Adverse)],
        aliases: &[
            "management continuity",
            "managerial continuity",
            "management stability",
            "경영 연속성",
            "경영연속성",
        ],
    },
    FactorSpec {
        id: FactorId::EmploymentStability,
        name: "Employment Stability",
        criterion: "Higher = (+)",
        rules: &[
            (O::Higher, P::Favorable),
            (O::Lower, P::Adverse),
            (O::MoreStable, P::Favorable),
            (O::LessStable, P::Adverse),
        ],
        aliases: &[
            "employment stability",
            "workforce stability",
            "employee turnover",
            "고용 안정",
            "고용안정",
        ],
    },
    FactorSpec {
        id: FactorId::CertificationStatus,
        name: "Certifications (e.g., INNOBIZ)",
        criterion: "Presence = (+)",
        rules: &[(O::Present, P::Favorable), (O::Absent, P::ContextDependent)],
        aliases: &[
            "certification status",
            "certifications",
            "certification",
            "innobiz",
            "인증",
        ],
    },
    FactorSpec {
        id: FactorId::SearchVolumeTrend,
        name: "Search Trend Volume",
        criterion: "Increasing = (+)",
        rules: &[(O::Increasing, P::Favorable), (O::Decreasing, P::Adverse)],
        aliases: &[
            "search trend volume",
            "search volume trend",
            "search volume",
            "search trend",
            "public perception",
            "검색량",
        ],
    },
];

/// The full guideline table, in canonical order.
pub fn factor_table() -> &'static [FactorSpec] {
    &FACTOR_TABLE
}

impl FactorId {
    pub const ALL: [FactorId; 10] = [
        Self::IndustryGrowthOutlook,
        Self::CompetitionIntensity,
        Self::TechnologicalDisruptionRisk,
        Self::EconomicCyclicality,
        Self::GovernmentSupport,
        Self::InternalControlRisk,
        Self::ManagerialContinuity,
        Self::EmploymentStability,
        Self::CertificationStatus,
        Self::SearchVolumeTrend,
    ];

    pub fn spec(self) -> &'static FactorSpec {
        &FACTOR_TABLE[self as usize]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::IndustryGrowthOutlook => "industry_growth_outlook",
            Self::CompetitionIntensity => "competition_intensity",
            Self::TechnologicalDisruptionRisk => "technological_disruption_risk",
            Self::EconomicCyclicality => "economic_cyclicality",
            Self::GovernmentSupport => "government_support",
            Self::InternalControlRisk => "internal_control_risk",
            Self::ManagerialContinuity => "managerial_continuity",
            Self::EmploymentStability => "employment_stability",
            Self::CertificationStatus => "certification_status",
            Self::SearchVolumeTrend => "search_volume_trend",
        }
    }

    pub fn name(self) -> &'static str {
        self.spec().name
    }

    /// Accepts the canonical id, the display name, or any registered alias.
    pub fn parse_label(label: &str) -> Option<FactorId> {
        let norm = label.trim().to_lowercase();
        let snake = norm.replace([' ', '-'], "_");
        FactorId::ALL.into_iter().find(|id| {
            id.as_str() == snake
                || id.name().to_lowercase() == norm
                || id.spec().aliases.contains(&norm.as_str())
        })
    }
}

impl fmt::Display for FactorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FactorId {
    type Err = GuidelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_label(s).ok_or_else(|| GuidelineError::UnknownFactor(s.to_string()))
    }
}

/// Interprets an observation on a guideline factor.
pub fn classify_signal(
    factor: FactorId,
    observation: Observation,
) -> Result<SignalPolarity, GuidelineError> {
    factor
        .spec()
        .rules
        .iter()
        .find(|(obs, _)| *obs == observation)
        .map(|(_, polarity)| *polarity)
        .ok_or(GuidelineError::Inapplicable {
            factor,
            observation,
        })
}

/// Like [`classify_signal`], but labels outside the table are
/// context-dependent rather than an error. The caller supplies the judgment.
pub fn classify_label(
    label: &str,
    observation: Observation,
) -> Result<SignalPolarity, GuidelineError> {
    match FactorId::parse_label(label) {
        Some(id) => classify_signal(id, observation),
        None => Ok(SignalPolarity::ContextDependent),
    }
}

pub fn factor_table_json() -> Value {
    let rows: Vec<Value> = factor_table()
        .iter()
        .map(|spec| {
            let rules: Vec<Value> = spec
                .rules
                .iter()
                .map(|(obs, pol)| json!({ "observation": obs, "signal": pol }))
                .collect();
            json!({
                "id": spec.id,
                "name": spec.name,
                "criterion": spec.criterion,
                "rules": rules,
                "aliases": spec.aliases,
            })
        })
        .collect();
    json!({ "factors": rows })
}

/// The guideline table as it appears inside prompts.
pub fn render_factor_table() -> String {
    let mut out = String::from("| Non-Financial Factor | Interpretation Standard |\n");
    for spec in factor_table() {
        out.push_str(&format!("| {} | {} |\n", spec.name, spec.criterion));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Affirmative,
    Negative,
}

/// Deterministic digest of the evidence backing a factor use.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fingerprint(pub String);

impl Fingerprint {
    pub fn of(date: Option<&str>, source: Option<&str>, value: Option<&str>) -> Self {
        let mut hasher = Sha256::new();
        for part in [date, source, value] {
            hasher.update(part.unwrap_or("").trim().to_lowercase().as_bytes());
            hasher.update([0x1f]);
        }
        Fingerprint(hex::encode(&hasher.finalize()[..8]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorUse {
    pub step: u8,
    pub fingerprint: Fingerprint,
}

/// Append-only record of which side used which factor, backed by what.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FactorUsageLedger {
    uses: BTreeMap<(Side, FactorId), Vec<FactorUse>>,
}

impl FactorUsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_usage(
        &mut self,
        side: Side,
        factor: FactorId,
        fingerprint: Fingerprint,
        step: u8,
    ) {
        debug_assert!((1..=10).contains(&step));
        self.uses
            .entry((side, factor))
            .or_default()
            .push(FactorUse { step, fingerprint });
    }

    pub fn len(&self) -> usize {
        self.uses.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn uses(&self, side: Side, factor: FactorId) -> &[FactorUse] {
        self.uses
            .get(&(side, factor))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(Side, FactorId), &Vec<FactorUse>)> {
        self.uses.iter()
    }
}

/// Flags every use that repeats an earlier (side, factor, fingerprint).
/// Reuse backed by different evidence is allowed. All findings are advisory.
pub fn check_factor_reuse(ledger: &FactorUsageLedger) -> Vec<Violation> {
    let mut out = Vec::new();
    for ((side, factor), uses) in ledger.iter() {
        for (j, later) in uses.iter().enumerate() {
            if let Some(earlier) = uses[..j]
                .iter()
                .find(|u| u.fingerprint == later.fingerprint)
            {
                out.push(Violation::advisory(
                    ViolationKind::FactorReuse,
                    later.step,
                    format!(
                        "{side:?} side reused {factor} with the same evidence as step {}",
                        earlier.step
                    ),
                ));
            }
        }
    }
    out
}
