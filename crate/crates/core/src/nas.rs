//! Single-pass analysis: summarize, search, compose, generate, post-process,
//! persist. One model call per run.

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::artifact::{digest, ArtifactSink};
use crate::clock::Stopwatch;
use crate::debate::{render_web_results, Env};
use crate::pool::{CompanyId, CompanySummary, EvidenceItem, EvidenceKind, KnowledgePool, RecencyPolicy};
use crate::runtime::{
    web_search, AgentRole, Event, GenerationRequest, Journal, Locale, PromptBundle,
    PromptTemplates, RoleId, SearchBudget, SearchOutcome, SearchOutcomeTag, Team, TemplateVars,
};

pub const STAGES: [&str; 6] = ["summarize", "search", "compose", "generate", "post_process", "persist"];

pub const REPORT_FILE: &str = "nas_report.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub topic: String,
    pub affirmative: String,
    pub adverse: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub company_id: CompanyId,
    pub model_id: String,
    pub as_of: NaiveDate,
    pub recency_days: u32,
    pub web_items: usize,
    pub started_at: DateTime<Utc>,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub favorable_summary: Vec<String>,
    pub adverse_summary: Vec<String>,
    pub topics: Vec<TopicEntry>,
    pub metadata: Option<GenerationMeta>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaIssue {
    pub path: String,
    pub problem: String,
}

impl std::fmt::Display for SchemaIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.problem)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("no JSON object at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("report does not match the schema: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Schema(Vec<SchemaIssue>),
}

#[derive(Debug, Error)]
#[error("stage {stage} failed: {message}")]
pub struct NasError {
    pub stage: &'static str,
    pub message: String,
}

impl AnalysisReport {
    pub fn to_value(&self) -> Value {
        let topics: Vec<Value> = self
            .topics
            .iter()
            .map(|t| json!({"topic": t.topic, "Affirmative": t.affirmative, "Adverse": t.adverse}))
            .collect();
        let mut root = Map::new();
        root.insert(
            "Analysis Summary".into(),
            json!({
                "Favorable Factors Summary": self.favorable_summary,
                "Adverse Factors Summary": self.adverse_summary,
                "topics": topics,
            }),
        );
        if let Some(meta) = &self.metadata {
            root.insert("metadata".into(), serde_json::to_value(meta).expect("metadata serializes"));
        }
        Value::Object(root)
    }

    pub fn render(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("report serializes")
    }

    /// Every citation written into the report text.
    pub fn citations(&self) -> Vec<crate::debate::Citation> {
        self.topics
            .iter()
            .flat_map(|t| [&t.affirmative, &t.adverse])
            .flat_map(|text| crate::debate::extract_structure(text).citations)
            .collect()
    }
}

/// Finds the first JSON object in `raw`, skipping prose and code fences.
pub fn first_json_object(raw: &str) -> Result<Value, ReportError> {
    let mut first_err = None;
    for (at, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[at..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(v @ Value::Object(_))) => return Ok(v),
            Some(Err(e)) if first_err.is_none() => {
                first_err = Some(ReportError::Parse {
                    offset: at + byte_offset(&raw[at..], e.line(), e.column()),
                    message: e.to_string(),
                });
            }
            _ => {}
        }
    }
    Err(first_err.unwrap_or(ReportError::Parse {
        offset: 0,
        message: "no opening brace".into(),
    }))
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len();
    }
    text.len()
}

fn string_list(obj: &Map<String, Value>, key: &str, issues: &mut Vec<SchemaIssue>) -> Vec<String> {
    match obj.get(key) {
        None => {
            issues.push(SchemaIssue { path: key.into(), problem: "missing".into() });
            Vec::new()
        }
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .filter_map(|(i, v)| match v {
                Value::String(s) => Some(s.clone()),
                _ => {
                    issues.push(SchemaIssue { path: format!("{key}[{i}]"), problem: "expected a string".into() });
                    None
                }
            })
            .collect(),
        Some(_) => {
            issues.push(SchemaIssue { path: key.into(), problem: "expected an array".into() });
            Vec::new()
        }
    }
}

/// Extracts and validates a model response. Schema issues are collected,
/// not reported one at a time.
pub fn post_process(raw: &str) -> Result<AnalysisReport, ReportError> {
    let value = first_json_object(raw)?;
    let mut issues = Vec::new();
    let Some(summary) = value.get("Analysis Summary") else {
        return Err(ReportError::Schema(vec![SchemaIssue {
            path: "Analysis Summary".into(),
            problem: "missing".into(),
        }]));
    };
    let Some(summary) = summary.as_object() else {
        return Err(ReportError::Schema(vec![SchemaIssue {
            path: "Analysis Summary".into(),
            problem: "expected an object".into(),
        }]));
    };
    let favorable_summary = string_list(summary, "Favorable Factors Summary", &mut issues);
    let adverse_summary = string_list(summary, "Adverse Factors Summary", &mut issues);
    let mut topics = Vec::new();
    match summary.get("topics") {
        None => issues.push(SchemaIssue { path: "topics".into(), problem: "missing".into() }),
        Some(Value::Array(entries)) => {
            for (i, entry) in entries.iter().enumerate() {
                let Some(obj) = entry.as_object() else {
                    issues.push(SchemaIssue { path: format!("topics[{i}]"), problem: "expected an object".into() });
                    continue;
                };
                let mut field = |key: &str| match obj.get(key) {
                    Some(Value::String(s)) => Some(s.clone()),
                    Some(_) => {
                        issues.push(SchemaIssue { path: format!("topics[{i}].{key}"), problem: "expected a string".into() });
                        None
                    }
                    None => {
                        issues.push(SchemaIssue { path: format!("topics[{i}].{key}"), problem: "missing".into() });
                        None
                    }
                };
                let (t, a, d) = (field("topic"), field("Affirmative"), field("Adverse"));
                if let (Some(topic), Some(affirmative), Some(adverse)) = (t, a, d) {
                    topics.push(TopicEntry { topic, affirmative, adverse });
                }
            }
        }
        Some(_) => issues.push(SchemaIssue { path: "topics".into(), problem: "expected an array".into() }),
    }
    let metadata = match value.get("metadata") {
        None => None,
        Some(m) => match serde_json::from_value(m.clone()) {
            Ok(meta) => Some(meta),
            Err(e) => {
                issues.push(SchemaIssue { path: "metadata".into(), problem: e.to_string() });
                None
            }
        },
    };
    if !issues.is_empty() {
        return Err(ReportError::Schema(issues));
    }
    Ok(AnalysisReport { favorable_summary, adverse_summary, topics, metadata })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    #[default]
    Always,
    /// Search only when the pool has no news inside the recency window.
    IfSparse,
}

#[derive(Debug, Clone)]
pub struct NasParams {
    pub company: CompanyId,
    pub company_name: String,
    pub model_id: String,
    pub policy: RecencyPolicy,
    pub max_search: usize,
    pub search_mode: SearchMode,
    pub locale: Locale,
}

/// Summary text: overview and per-factor digest, then untagged records.
pub fn summary_text(pool: &KnowledgePool, summary: &CompanySummary, policy: &RecencyPolicy) -> String {
    let mut out = pool.render_summary(summary);
    let untagged: Vec<_> = pool
        .retrieve(&summary.company_id, policy)
        .items
        .into_iter()
        .filter(|i| i.factor_tag.is_none())
        .collect();
    if !untagged.is_empty() {
        out.push_str("- Other records:\n");
        for item in untagged {
            out.push_str(&format!("  * {}\n", item.render_line()));
        }
    }
    out
}

pub fn compose_prompt(
    templates: &PromptTemplates,
    vars: &TemplateVars,
    summary: &str,
    web: &[EvidenceItem],
    locale: &Locale,
) -> Result<PromptBundle, crate::runtime::TemplateError> {
    let system = templates.role_system(RoleId::NasAnalyst, vars)?;
    let task = format!(
        "{}\n\n[Company Summary]\n{}\n{}",
        templates.nas_task(vars),
        summary.trim_end(),
        render_web_results(web)
    );
    Ok(PromptBundle::new(RoleId::NasAnalyst, system, task, locale.clone()))
}

fn pipeline_role() -> AgentRole {
    // the pipeline, not the analyst agent, runs the search
    AgentRole { id: RoleId::NasAnalyst, team: Team::Neutral, search_allowed: true }
}

pub fn run_nas(
    env: Env<'_>,
    params: &NasParams,
    journal: &mut Journal,
    sink: &mut dyn ArtifactSink,
) -> Result<AnalysisReport, NasError> {
    let clock = env.clock;
    let watch = Stopwatch::start(clock);
    let started_at = clock.now();
    let mut stage_no = 0;
    let mut enter = |journal: &mut Journal, expected: &'static str| {
        debug_assert_eq!(STAGES[stage_no], expected);
        stage_no += 1;
        journal.record(clock, Event::StageStarted { stage: expected.into() });
        expected
    };
    let fail = |journal: &mut Journal, stage: &'static str, message: String| {
        journal.record(clock, Event::StageFailed { stage: stage.into(), error: message.clone() });
        journal.record(clock, Event::RunAborted { reason: format!("stage {stage} failed") });
        NasError { stage, message }
    };
    let done = |journal: &mut Journal, stage: &'static str| {
        journal.record(clock, Event::StageCompleted { stage: stage.into() });
    };

    let stage = enter(journal, "summarize");
    let summary = match env.pool.summarize_company(&params.company) {
        Ok(s) => s,
        Err(e) => return Err(fail(journal, stage, e.to_string())),
    };
    let summary = summary_text(env.pool, &summary, &params.policy);
    done(journal, stage);

    let stage = enter(journal, "search");
    let sparse = !env
        .pool
        .retrieve(&params.company, &params.policy)
        .items
        .iter()
        .any(|i| i.kind == EvidenceKind::News && params.policy.in_window(i.date));
    let mut web = Vec::new();
    if params.search_mode == SearchMode::Always || sparse {
        let query = format!("{} latest news", params.company_name);
        let mut budget = SearchBudget::new(params.max_search, 1);
        let outcome = web_search(&pipeline_role(), &params.company, &query, &params.policy, &mut budget, env.search, clock);
        let (tag, n) = match outcome {
            Ok(SearchOutcome::Items(items)) => {
                let n = items.len();
                web = items;
                (SearchOutcomeTag::Ok, n)
            }
            Ok(SearchOutcome::BudgetExhausted) => (SearchOutcomeTag::BudgetExhausted, 0),
            // a failed search leaves the analysis to the pool alone
            Err(_) => (SearchOutcomeTag::Failed, 0),
        };
        journal.record(clock, Event::Search { role: RoleId::NasAnalyst, step: 1, query, outcome: tag, items: n });
    }
    done(journal, stage);

    let stage = enter(journal, "compose");
    let mut vars = TemplateVars::default().with_locale(&params.locale).with_company(&params.company_name);
    vars.set("recency_days", params.policy.window_days().to_string());
    vars.set("as_of", params.policy.as_of.to_string());
    let bundle = match compose_prompt(env.templates, &vars, &summary, &web, &params.locale) {
        Ok(b) => b,
        Err(e) => return Err(fail(journal, stage, e.to_string())),
    };
    done(journal, stage);

    let stage = enter(journal, "generate");
    let request = GenerationRequest {
        role: RoleId::NasAnalyst,
        step: 1,
        attempt: 0,
        model_id: &params.model_id,
        bundle: &bundle,
    };
    let raw = match env.backend.generate(&request) {
        Ok(r) => r,
        Err(e) => return Err(fail(journal, stage, e.to_string())),
    };
    journal.record(
        clock,
        Event::Generation {
            role: RoleId::NasAnalyst,
            step: 1,
            attempt: 0,
            prompt_digest: bundle.digest(),
            response: raw.clone(),
        },
    );
    done(journal, stage);

    let stage = enter(journal, "post_process");
    let mut report = match post_process(&raw) {
        Ok(r) => r,
        Err(e) => return Err(fail(journal, stage, e.to_string())),
    };
    report.metadata = Some(GenerationMeta {
        company_id: params.company.clone(),
        model_id: params.model_id.clone(),
        as_of: params.policy.as_of,
        recency_days: params.policy.window_days(),
        web_items: web.len(),
        started_at,
        elapsed_seconds: watch.elapsed_seconds(),
    });
    done(journal, stage);

    let stage = enter(journal, "persist");
    let bytes = report.render().into_bytes();
    match sink.write(REPORT_FILE, &bytes) {
        Ok(path) => journal.record(clock, Event::ArtifactWritten { path, digest: digest(&bytes) }),
        Err(e) => return Err(fail(journal, stage, e.to_string())),
    }
    journal.record_timed(clock, Event::StageCompleted { stage: stage.into() }, Some(watch.elapsed_seconds()));
    Ok(report)
}
