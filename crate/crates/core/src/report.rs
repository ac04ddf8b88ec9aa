//! Deterministic aggregation of a finished debate into the balanced summary
//! report, plus an optional model rewrite of the prose.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::debate::{extract_structure, Citation, Transcript};
use crate::guideline::FactorId;
use crate::nas::first_json_object;
use crate::runtime::{Backend, GenerationRequest, Locale, PromptBundle, PromptTemplates, RoleId, Team, TemplateVars};

pub const REPORT_FILE: &str = "debate_summary.json";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceRef {
    pub date: Option<String>,
    pub source: Option<String>,
}

impl From<&Citation> for SourceRef {
    fn from(c: &Citation) -> Self {
        Self {
            date: c.date.clone(),
            source: c.source.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateTopic {
    pub topic: String,
    pub pro: String,
    pub con: String,
    pub sources: Vec<SourceRef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DebateSummaryReport {
    pub favorable_factor_summary: Vec<String>,
    pub adverse_factor_summary: Vec<String>,
    pub topics: Vec<DebateTopic>,
    /// Citations no factor could be linked to; kept so nothing is dropped.
    pub unassigned_sources: Vec<SourceRef>,
    pub objective_statement: String,
    pub corporate_overview: String,
    pub transcript_ref: String,
    pub coverage_note: Option<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthesisError {
    #[error("the transcript has {0} steps; aggregation needs all 10")]
    IncompleteTranscript(usize),
    #[error("duplicate topic {0:?}")]
    DuplicateTopic(String),
    #[error("malformed summary report at {path}: {problem}")]
    Malformed { path: String, problem: String },
    #[error("polish rejected: {0}")]
    PolishRejected(String),
}

/// Inputs beyond the transcript itself.
#[derive(Debug, Clone, Default)]
pub struct ReportContext {
    pub transcript_ref: String,
    pub company_name: String,
    pub corporate_overview: String,
    /// Factors with tagged evidence in the pool, for the coverage note.
    pub pool_factors: Vec<FactorId>,
}

fn push_unique(out: &mut Vec<String>, s: &str) {
    if !s.is_empty() && !out.iter().any(|x| x == s) {
        out.push(s.to_string());
    }
}

pub fn aggregate(transcript: &Transcript, ctx: &ReportContext) -> Result<DebateSummaryReport, SynthesisError> {
    if !transcript.is_complete() {
        return Err(SynthesisError::IncompleteTranscript(transcript.steps.len()));
    }
    struct Acc {
        first_step: u8,
        pro: Vec<String>,
        con: Vec<String>,
        sources: Vec<SourceRef>,
    }
    let mut acc: BTreeMap<FactorId, Acc> = BTreeMap::new();
    let mut unassigned = Vec::new();

    for u in &transcript.steps {
        let s = extract_structure(&u.text);
        let team = u.speaker.team();
        for &f in &u.factors {
            let entry = acc.entry(f).or_insert_with(|| Acc {
                first_step: u.index,
                pro: Vec::new(),
                con: Vec::new(),
                sources: Vec::new(),
            });
            let side = match team {
                Team::Affirmative => &mut entry.pro,
                Team::Negative => &mut entry.con,
                Team::Neutral => continue,
            };
            for sentence in s.sentences_about(f) {
                push_unique(side, sentence);
            }
        }
        for (c, link) in u.citations.iter().zip(s.citation_factors()) {
            match link.and_then(|f| acc.get_mut(&f)) {
                Some(entry) => entry.sources.push(c.into()),
                None => unassigned.push(c.into()),
            }
        }
    }

    let mut order: Vec<(u8, String, FactorId)> = acc
        .iter()
        .map(|(f, a)| (a.first_step, f.name().to_string(), *f))
        .collect();
    order.sort();

    let mut report = DebateSummaryReport {
        favorable_factor_summary: Vec::new(),
        adverse_factor_summary: Vec::new(),
        topics: Vec::new(),
        unassigned_sources: unassigned,
        objective_statement: format!(
            "Balanced assessment of the loan repayment capacity of {} from non-financial evidence, keeping affirmative and negative positions side by side.",
            if ctx.company_name.is_empty() { transcript.session.company_id.as_str() } else { &ctx.company_name }
        ),
        corporate_overview: ctx.corporate_overview.clone(),
        transcript_ref: ctx.transcript_ref.clone(),
        coverage_note: None,
        warnings: Vec::new(),
    };
    for (_, label, f) in order {
        let a = acc.remove(&f).expect("ordered from acc");
        if let Some(first) = a.pro.first() {
            report.favorable_factor_summary.push(format!("{label}: {first}"));
        }
        if let Some(first) = a.con.first() {
            report.adverse_factor_summary.push(format!("{label}: {first}"));
        }
        report.topics.push(DebateTopic {
            topic: label,
            pro: a.pro.join(" "),
            con: a.con.join(" "),
            sources: a.sources,
        });
    }
    if report.topics.is_empty() {
        report
            .warnings
            .push("no factors could be extracted from the transcript".into());
    }
    let covered: BTreeSet<&str> = report.topics.iter().map(|t| t.topic.as_str()).collect();
    let missing: Vec<&str> = ctx
        .pool_factors
        .iter()
        .map(|f| f.name())
        .filter(|n| !covered.contains(n))
        .collect();
    if !missing.is_empty() {
        report.coverage_note = Some(format!(
            "Pool evidence not raised in the debate: {}.",
            missing.join(", ")
        ));
    }
    Ok(report)
}

impl DebateSummaryReport {
    /// Every (date, source) pair in the report, topics first.
    pub fn citation_multiset(&self) -> BTreeMap<SourceRef, usize> {
        let mut out = BTreeMap::new();
        for s in self
            .topics
            .iter()
            .flat_map(|t| t.sources.iter())
            .chain(&self.unassigned_sources)
        {
            *out.entry(s.clone()).or_insert(0) += 1;
        }
        out
    }

    pub fn check_unique_topics(&self) -> Result<(), SynthesisError> {
        let mut seen = BTreeSet::new();
        for t in &self.topics {
            if !seen.insert(t.topic.as_str()) {
                return Err(SynthesisError::DuplicateTopic(t.topic.clone()));
            }
        }
        Ok(())
    }

    pub fn to_value(&self) -> Result<Value, SynthesisError> {
        self.check_unique_topics()?;
        let mut root = Map::new();
        root.insert(
            "Debate Summary".into(),
            json!({
                "Favorable Factor Summary": self.favorable_factor_summary,
                "Adverse Factor Summary": self.adverse_factor_summary,
                "topics": self.topics,
            }),
        );
        root.insert("Objective Statement".into(), json!(self.objective_statement));
        root.insert("Corporate Overview".into(), json!(self.corporate_overview));
        root.insert("Unassigned Sources".into(), json!(self.unassigned_sources));
        root.insert("Transcript".into(), json!(self.transcript_ref));
        if let Some(note) = &self.coverage_note {
            root.insert("Coverage Note".into(), json!(note));
        }
        if !self.warnings.is_empty() {
            root.insert("Warnings".into(), json!(self.warnings));
        }
        Ok(Value::Object(root))
    }
}

pub fn render_report(report: &DebateSummaryReport) -> Result<String, SynthesisError> {
    Ok(serde_json::to_string_pretty(&report.to_value()?).expect("report serializes"))
}

fn malformed(path: &str, problem: &str) -> SynthesisError {
    SynthesisError::Malformed {
        path: path.into(),
        problem: problem.into(),
    }
}

fn strings(v: Option<&Value>, path: &str) -> Result<Vec<String>, SynthesisError> {
    let arr = v.and_then(Value::as_array).ok_or_else(|| malformed(path, "expected an array"))?;
    arr.iter()
        .enumerate()
        .map(|(i, s)| {
            s.as_str()
                .map(str::to_string)
                .ok_or_else(|| malformed(&format!("{path}[{i}]"), "expected a string"))
        })
        .collect()
}

fn optional_text(root: &Map<String, Value>, key: &str) -> Result<String, SynthesisError> {
    match root.get(key) {
        None => Ok(String::new()),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(malformed(key, "expected a string")),
    }
}

/// Reads a rendered report back. The three inner keys are required;
/// the extra top-level fields are optional.
pub fn parse_report(value: &Value) -> Result<DebateSummaryReport, SynthesisError> {
    let root = value.as_object().ok_or_else(|| malformed("$", "expected an object"))?;
    let summary = root
        .get("Debate Summary")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed("Debate Summary", "missing or not an object"))?;
    let extra: Vec<&String> = summary
        .keys()
        .filter(|k| !["Favorable Factor Summary", "Adverse Factor Summary", "topics"].contains(&k.as_str()))
        .collect();
    if let Some(k) = extra.first() {
        return Err(malformed(&format!("Debate Summary.{k}"), "unexpected key"));
    }
    let topics_raw = summary
        .get("topics")
        .cloned()
        .ok_or_else(|| malformed("Debate Summary.topics", "missing"))?;
    let topics: Vec<DebateTopic> = serde_json::from_value(topics_raw)
        .map_err(|e| malformed("Debate Summary.topics", &e.to_string()))?;
    let unassigned_sources = match root.get("Unassigned Sources") {
        None => Vec::new(),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| malformed("Unassigned Sources", &e.to_string()))?,
    };
    let report = DebateSummaryReport {
        favorable_factor_summary: strings(summary.get("Favorable Factor Summary"), "Debate Summary.Favorable Factor Summary")?,
        adverse_factor_summary: strings(summary.get("Adverse Factor Summary"), "Debate Summary.Adverse Factor Summary")?,
        topics,
        unassigned_sources,
        objective_statement: optional_text(root, "Objective Statement")?,
        corporate_overview: optional_text(root, "Corporate Overview")?,
        transcript_ref: optional_text(root, "Transcript")?,
        coverage_note: root.get("Coverage Note").and_then(Value::as_str).map(str::to_string),
        warnings: match root.get("Warnings") {
            None => Vec::new(),
            v => strings(v, "Warnings")?,
        },
    };
    report.check_unique_topics()?;
    Ok(report)
}

/// Asks the aggregator agent to rewrite the prose of `draft`. The result is
/// accepted only if topics and every source entry survive unchanged.
pub fn polish(
    draft: &DebateSummaryReport,
    backend: &dyn Backend,
    templates: &PromptTemplates,
    model_id: &str,
    locale: &Locale,
) -> Result<DebateSummaryReport, SynthesisError> {
    let vars = TemplateVars::default()
        .with_locale(locale)
        .with_company(&draft_company(draft));
    let system = templates
        .role_system(RoleId::Aggregator, &vars)
        .map_err(|e| SynthesisError::PolishRejected(e.to_string()))?;
    let task = format!(
        "{}\n\n```json\n{}\n```",
        templates.aggregate_task(&vars),
        render_report(draft)?
    );
    let bundle = PromptBundle::new(RoleId::Aggregator, system, task, locale.clone());
    let request = GenerationRequest {
        role: RoleId::Aggregator,
        step: 11,
        attempt: 0,
        model_id,
        bundle: &bundle,
    };
    let raw = backend
        .generate(&request)
        .map_err(|e| SynthesisError::PolishRejected(e.to_string()))?;
    let value = first_json_object(&raw).map_err(|e| SynthesisError::PolishRejected(e.to_string()))?;
    let mut polished = parse_report(&value)?;
    let labels = |r: &DebateSummaryReport| r.topics.iter().map(|t| t.topic.clone()).collect::<Vec<_>>();
    if labels(&polished) != labels(draft) {
        return Err(SynthesisError::PolishRejected("topic set changed".into()));
    }
    if polished.citation_multiset() != draft.citation_multiset() {
        return Err(SynthesisError::PolishRejected("citations changed".into()));
    }
    // fields the model is not asked to touch come from the draft
    polished.transcript_ref = draft.transcript_ref.clone();
    polished.coverage_note = draft.coverage_note.clone();
    polished.warnings = draft.warnings.clone();
    polished.unassigned_sources = draft.unassigned_sources.clone();
    Ok(polished)
}

fn draft_company(draft: &DebateSummaryReport) -> String {
    draft
        .objective_statement
        .split(" capacity of ")
        .nth(1)
        .and_then(|rest| rest.split(" from ").next())
        .unwrap_or("the company")
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DebateSummaryReport {
        DebateSummaryReport {
            favorable_factor_summary: vec!["Industry Growth Outlook: up".into()],
            adverse_factor_summary: vec![],
            topics: vec![DebateTopic {
                topic: "Industry Growth Outlook".into(),
                pro: "up".into(),
                con: String::new(),
                sources: vec![SourceRef { date: Some("2025-01-01".into()), source: Some("KOSIS".into()) }],
            }],
            unassigned_sources: vec![],
            objective_statement: "obj".into(),
            corporate_overview: "ov".into(),
            transcript_ref: "t.json".into(),
            coverage_note: None,
            warnings: vec![],
        }
    }

    #[test]
    fn render_has_exact_inner_keys_and_round_trips() {
        let r = sample();
        let text = render_report(&r).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<_> = v["Debate Summary"].as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["Favorable Factor Summary", "Adverse Factor Summary", "topics"]);
        assert_eq!(v["Debate Summary"]["topics"][0]["con"], "");
        let back = parse_report(&v).unwrap();
        assert_eq!(back, r);
        assert_eq!(render_report(&back).unwrap(), text);
    }

    #[test]
    fn duplicate_topics_are_refused() {
        let mut r = sample();
        r.topics.push(r.topics[0].clone());
        assert_eq!(
            render_report(&r),
            Err(SynthesisError::DuplicateTopic("Industry Growth Outlook".into()))
        );
    }

    #[test]
    fn company_name_recovered_from_objective() {
        let mut r = sample();
        r.objective_statement = "Balanced assessment of the loan repayment capacity of Acme Ltd from non-financial evidence.".into();
        assert_eq!(draft_company(&r), "Acme Ltd");
    }
}
