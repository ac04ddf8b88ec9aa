//! Company-scoped store of dated, sourced non-financial evidence.
//!
//! Pool files are one JSON document per company:
//!
//! ```json
//! { "company_id": "A", "company_summary": "...",
//!   "company_data": [ { "kind": "news", "date": "2025-03-01", "source": "...",
//!                       "content": "...", "factor_tag": null, "value": null, "unit": null } ] }
//! ```
//!
//! Records without a parseable date or a non-empty source are rejected at
//! ingestion; the rest of the document still loads.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::guideline::FactorId;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CompanyId(pub String);

impl CompanyId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CompanyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    Disclosure,
    News,
    Certification,
    Patent,
    Governance,
    Statistic,
    SearchTrend,
}

impl EvidenceKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s.trim().to_ascii_lowercase().as_str() {
            "disclosure" => Self::Disclosure,
            "news" => Self::News,
            "certification" => Self::Certification,
            "patent" => Self::Patent,
            "governance" => Self::Governance,
            "statistic" => Self::Statistic,
            "search_trend" => Self::SearchTrend,
            _ => return None,
        })
    }

    /// Factor implied by the record kind when no tag is given.
    pub fn default_factor(self) -> Option<FactorId> {
        match self {
            Self::Certification => Some(FactorId::CertificationStatus),
            Self::SearchTrend => Some(FactorId::SearchVolumeTrend),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Pool,
    WebSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub company_id: CompanyId,
    pub kind: EvidenceKind,
    pub factor_tag: Option<FactorId>,
    pub content: String,
    pub value: Option<f64>,
    pub unit: Option<String>,
    pub date: NaiveDate,
    pub source: String,
    pub origin: Origin,
    /// Set for web results only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub retrieved_at: Option<DateTime<Utc>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub url: Option<String>,
}

impl EvidenceItem {
    /// One line suitable for prompt injection: date, source, tag, content.
    pub fn render_line(&self) -> String {
        let mut line = format!("({}, {})", self.date, self.source);
        if let Some(tag) = self.factor_tag {
            line.push_str(&format!(" [{}]", tag.name()));
        }
        line.push(' ');
        line.push_str(&self.content);
        if let Some(v) = self.value {
            line.push_str(&format!(" = {v}"));
            if let Some(unit) = &self.unit {
                line.push(' ');
                line.push_str(unit);
            }
        }
        line
    }

    pub fn value_label(&self) -> Option<String> {
        self.value.map(|v| match &self.unit {
            Some(u) => format!("{v} {u}"),
            None => v.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub index: usize,
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestOutcome {
    pub company_id: CompanyId,
    pub summary: String,
    pub items: Vec<EvidenceItem>,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("malformed pool document: field `{field}`: {reason}")]
    Malformed { field: String, reason: String },
    #[error("insufficient data for company `{0}`")]
    InsufficientData(CompanyId),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("company `{0}` appears in more than one pool document")]
    DuplicateCompany(CompanyId),
}

fn malformed(field: impl Into<String>, reason: impl Into<String>) -> PoolError {
    PoolError::Malformed {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Parses one company document into evidence items and per-record rejections.
pub fn ingest_document(raw: &Value) -> Result<IngestOutcome, PoolError> {
    let doc = raw
        .as_object()
        .ok_or_else(|| malformed("$", "expected a JSON object"))?;
    let company_id = match doc.get("company_id") {
        Some(Value::String(s)) if !s.trim().is_empty() => CompanyId::new(s.trim()),
        Some(_) => return Err(malformed("company_id", "expected a non-empty string")),
        None => return Err(malformed("company_id", "missing")),
    };
    let summary = match doc.get("company_summary") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(malformed("company_summary", "expected a string")),
    };
    let records = match doc.get("company_data") {
        Some(Value::Array(a)) => a,
        Some(_) => return Err(malformed("company_data", "expected an array")),
        None => return Err(malformed("company_data", "missing")),
    };

    let mut items = Vec::new();
    let mut rejections = Vec::new();
    for (index, record) in records.iter().enumerate() {
        let obj = record
            .as_object()
            .ok_or_else(|| malformed(format!("company_data[{index}]"), "expected an object"))?;
        match parse_record(&company_id, obj) {
            Ok(item) => items.push(item),
            Err((field, reason)) => rejections.push(Rejection {
                index,
                field: field.to_string(),
                reason,
            }),
        }
    }
    Ok(IngestOutcome {
        company_id,
        summary,
        items,
        rejections,
    })
}

fn opt_str<'a>(obj: &'a Map<String, Value>, key: &'static str) -> Result<Option<&'a str>, (&'static str, String)> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.as_str())),
        Some(other) => Err((key, format!("expected a string, found {other}"))),
    }
}

fn parse_record(
    company_id: &CompanyId,
    obj: &Map<String, Value>,
) -> Result<EvidenceItem, (&'static str, String)> {
    let kind_raw = opt_str(obj, "kind")?.ok_or(("kind", "missing".to_string()))?;
    let kind = EvidenceKind::parse(kind_raw).ok_or(("kind", format!("unknown kind `{kind_raw}`")))?;
    let date_raw = opt_str(obj, "date")?
        .filter(|s| !s.trim().is_empty())
        .ok_or(("date", "undated record".to_string()))?;
    let date = NaiveDate::parse_from_str(date_raw.trim(), "%Y-%m-%d")
        .map_err(|e| ("date", format!("`{date_raw}` is not YYYY-MM-DD: {e}")))?;
    let source = opt_str(obj, "source")?
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or(("source", "missing source".to_string()))?;
    let content = opt_str(obj, "content")?.unwrap_or("").to_string();
    let factor_tag = match opt_str(obj, "factor_tag")? {
        Some(tag) => Some(
            FactorId::parse_label(tag).ok_or(("factor_tag", format!("unknown factor `{tag}`")))?,
        ),
        None => kind.default_factor(),
    };
    let value = match obj.get("value") {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => n.as_f64(),
        Some(other) => return Err(("value", format!("expected a number, found {other}"))),
    };
    let unit = opt_str(obj, "unit")?.map(str::to_string);
    Ok(EvidenceItem {
        company_id: company_id.clone(),
        kind,
        factor_tag,
        content,
        value,
        unit,
        date,
        source: source.to_string(),
        origin: Origin::Pool,
        retrieved_at: None,
        url: None,
    })
}

/// Recency preference: items inside `[as_of - window_days, as_of]` rank first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecencyPolicy {
    window_days: u32,
    pub as_of: NaiveDate,
}

impl RecencyPolicy {
    pub fn new(window_days: u32, as_of: NaiveDate) -> Option<Self> {
        (window_days >= 1).then_some(Self { window_days, as_of })
    }

    pub fn window_days(&self) -> u32 {
        self.window_days
    }

    pub fn floor(&self) -> NaiveDate {
        self.as_of - Duration::days(self.window_days as i64)
    }

    pub fn in_window(&self, date: NaiveDate) -> bool {
        date >= self.floor() && date <= self.as_of
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalStatus {
    Found,
    UnknownCompany,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub status: RetrievalStatus,
    pub items: Vec<EvidenceItem>,
}

/// Index of an item within its company's ingestion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvidenceRef(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompanySummary {
    pub company_id: CompanyId,
    pub overview: String,
    pub per_factor_digest: BTreeMap<FactorId, Vec<EvidenceRef>>,
}

#[derive(Debug, Clone, Default)]
struct CompanyRecord {
    summary: String,
    items: Vec<EvidenceItem>,
}

/// Immutable once loaded; shared freely across sessions.
#[derive(Debug, Clone, Default)]
pub struct KnowledgePool {
    companies: BTreeMap<CompanyId, CompanyRecord>,
}

impl KnowledgePool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads every `*.json` file in `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<(Self, Vec<IngestOutcome>), PoolError> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|source| PoolError::Io {
                path: dir.to_path_buf(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        paths.sort();
        let mut pool = Self::new();
        let mut outcomes = Vec::new();
        for path in paths {
            let outcome = pool.ingest_file(&path)?;
            outcomes.push(outcome);
        }
        Ok((pool, outcomes))
    }

    pub fn ingest_file(&mut self, path: &Path) -> Result<IngestOutcome, PoolError> {
        let text = fs::read_to_string(path).map_err(|source| PoolError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let raw: Value = serde_json::from_str(&text).map_err(|source| PoolError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        self.ingest(&raw)
    }

    pub fn ingest(&mut self, raw: &Value) -> Result<IngestOutcome, PoolError> {
        let outcome = ingest_document(raw)?;
        if self.companies.contains_key(&outcome.company_id) {
            return Err(PoolError::DuplicateCompany(outcome.company_id));
        }
        self.companies.insert(
            outcome.company_id.clone(),
            CompanyRecord {
                summary: outcome.summary.clone(),
                items: outcome.items.clone(),
            },
        );
        Ok(outcome)
    }

    pub fn companies(&self) -> impl Iterator<Item = &CompanyId> {
        self.companies.keys()
    }

    pub fn contains(&self, company: &CompanyId) -> bool {
        self.companies.contains_key(company)
    }

    /// All items for `company` in ingestion order.
    pub fn items(&self, company: &CompanyId) -> &[EvidenceItem] {
        self.companies
            .get(company)
            .map(|r| r.items.as_slice())
            .unwrap_or(&[])
    }

    pub fn item(&self, company: &CompanyId, r: EvidenceRef) -> Option<&EvidenceItem> {
        self.items(company).get(r.0)
    }

    pub fn company_summary_text(&self, company: &CompanyId) -> Option<&str> {
        self.companies.get(company).map(|r| r.summary.as_str())
    }

    /// Company items ranked by recency: in-window first, then older, each
    /// tier date-descending with ingestion order breaking ties.
    pub fn retrieve(&self, company: &CompanyId, policy: &RecencyPolicy) -> Retrieved {
        let Some(record) = self.companies.get(company) else {
            return Retrieved {
                status: RetrievalStatus::UnknownCompany,
                items: Vec::new(),
            };
        };
        let order = rank_by_recency(&record.items, policy);
        Retrieved {
            status: RetrievalStatus::Found,
            items: order.into_iter().map(|i| record.items[i].clone()).collect(),
        }
    }

    pub fn summarize_company(&self, company: &CompanyId) -> Result<CompanySummary, PoolError> {
        let record = self
            .companies
            .get(company)
            .filter(|r| !r.items.is_empty())
            .ok_or_else(|| PoolError::InsufficientData(company.clone()))?;
        let mut digest: BTreeMap<FactorId, Vec<EvidenceRef>> = BTreeMap::new();
        for (i, item) in record.items.iter().enumerate() {
            if let Some(tag) = item.factor_tag {
                digest.entry(tag).or_default().push(EvidenceRef(i));
            }
        }
        for refs in digest.values_mut() {
            // stable sort keeps ingestion order among equal dates
            refs.sort_by(|a, b| record.items[b.0].date.cmp(&record.items[a.0].date));
        }
        Ok(CompanySummary {
            company_id: company.clone(),
            overview: record.summary.clone(),
            per_factor_digest: digest,
        })
    }

    /// Text block used by prompts: overview, then per-factor evidence lines.
    pub fn render_summary(&self, summary: &CompanySummary) -> String {
        let mut out = format!("Company: {}\nOverview: {}\n", summary.company_id, summary.overview);
        for (factor, refs) in &summary.per_factor_digest {
            out.push_str(&format!("- {}:\n", factor.name()));
            for r in refs {
                if let Some(item) = self.item(&summary.company_id, *r) {
                    out.push_str(&format!("  * {}\n", item.render_line()));
                }
            }
        }
        out
    }
}

/// Indices of `items` in recency-ranked order.
pub fn rank_by_recency(items: &[EvidenceItem], policy: &RecencyPolicy) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (items[a].date, items[b].date);
        policy
            .in_window(db)
            .cmp(&policy.in_window(da))
            .then(db.cmp(&da))
    });
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn doc(records: Value) -> Value {
        json!({ "company_id": "A", "company_summary": "Maker of widgets", "company_data": records })
    }

    #[test]
    fn certification_record_gets_default_tag() {
        let out = ingest_document(&doc(json!([
            { "kind": "certification", "date": "2024-06-01", "source": "INNOBIZ registry", "content": "INNOBIZ renewed" }
        ])))
        .unwrap();
        assert_eq!(out.items.len(), 1);
        assert_eq!(out.items[0].factor_tag, Some(FactorId::CertificationStatus));
        assert!(out.rejections.is_empty());
    }

    #[test]
    fn missing_source_is_rejected() {
        let out = ingest_document(&doc(json!([
            { "kind": "news", "date": "2024-06-01", "content": "x" }
        ])))
        .unwrap();
        assert!(out.items.is_empty());
        assert_eq!(out.rejections.len(), 1);
        assert_eq!(out.rejections[0].field, "source");
    }

    #[test]
    fn blank_source_and_bad_date_are_rejected() {
        let out = ingest_document(&doc(json!([
            { "kind": "news", "date": "2024-06-01", "source": "   " },
            { "kind": "news", "date": "June 2024", "source": "Daily" },
            { "kind": "news", "date": null, "source": "Daily" },
        ])))
        .unwrap();
        let fields: Vec<_> = out.rejections.iter().map(|r| r.field.as_str()).collect();
        assert_eq!(fields, ["source", "date", "date"]);
    }

    #[test]
    fn malformed_document_names_field() {
        let err = ingest_document(&json!({ "company_id": "A", "company_data": {} })).unwrap_err();
        assert!(err.to_string().contains("company_data"), "{err}");
        let err = ingest_document(&json!({ "company_data": [] })).unwrap_err();
        assert!(err.to_string().contains("company_id"), "{err}");
        let err = ingest_document(&json!({ "company_id": "A", "company_data": [3] })).unwrap_err();
        assert!(err.to_string().contains("company_data[0]"), "{err}");
    }

    #[test]
    fn unknown_factor_tag_is_rejected() {
        let out = ingest_document(&doc(json!([
            { "kind": "news", "date": "2024-06-01", "source": "s", "factor_tag": "weather" }
        ])))
        .unwrap();
        assert_eq!(out.rejections[0].field, "factor_tag");
    }

    #[test]
    fn empty_pool_and_unknown_company() {
        let pool = KnowledgePool::new();
        let policy = RecencyPolicy::new(90, d("2025-06-30")).unwrap();
        let r = pool.retrieve(&CompanyId::new("nope"), &policy);
        assert_eq!(r.status, RetrievalStatus::UnknownCompany);
        assert!(r.items.is_empty());
    }

    #[test]
    fn window_must_be_positive() {
        assert!(RecencyPolicy::new(0, d("2025-01-01")).is_none());
        let p = RecencyPolicy::new(1, d("2025-01-02")).unwrap();
        assert!(p.in_window(d("2025-01-01")));
        assert!(!p.in_window(d("2024-12-31")));
        assert!(!p.in_window(d("2025-01-03")));
    }

    #[test]
    fn same_date_keeps_ingestion_order() {
        let mut pool = KnowledgePool::new();
        pool.ingest(&doc(json!([
            { "kind": "news", "date": "2025-05-01", "source": "first" },
            { "kind": "news", "date": "2025-05-01", "source": "second" },
        ])))
        .unwrap();
        let policy = RecencyPolicy::new(90, d("2025-06-30")).unwrap();
        let r = pool.retrieve(&CompanyId::new("A"), &policy);
        let sources: Vec<_> = r.items.iter().map(|i| i.source.as_str()).collect();
        assert_eq!(sources, ["first", "second"]);
    }

    #[test]
    fn summary_needs_items() {
        let mut pool = KnowledgePool::new();
        pool.ingest(&doc(json!([]))).unwrap();
        let err = pool.summarize_company(&CompanyId::new("A")).unwrap_err();
        assert!(matches!(err, PoolError::InsufficientData(ref c) if c.as_str() == "A"));
    }

    #[test]
    fn summary_digest_prefers_recent() {
        let mut pool = KnowledgePool::new();
        pool.ingest(&doc(json!([
            { "kind": "statistic", "date": "2024-01-15", "source": "KOSIS", "factor_tag": "industry_growth_outlook" },
            { "kind": "statistic", "date": "2025-03-15", "source": "KOSIS", "factor_tag": "industry_growth_outlook" },
            { "kind": "certification", "date": "2023-03-15", "source": "registry" },
            { "kind": "news", "date": "2023-03-15", "source": "gazette" },
        ])))
        .unwrap();
        let id = CompanyId::new("A");
        let s = pool.summarize_company(&id).unwrap();
        assert_eq!(s.per_factor_digest.len(), 2);
        let growth = &s.per_factor_digest[&FactorId::IndustryGrowthOutlook];
        assert_eq!(pool.item(&id, growth[0]).unwrap().date, d("2025-03-15"));
        let text = pool.render_summary(&s);
        assert!(text.contains("(2025-03-15, KOSIS)"));
    }

    #[test]
    fn duplicate_company_documents_are_refused() {
        let mut pool = KnowledgePool::new();
        pool.ingest(&doc(json!([]))).unwrap();
        assert!(matches!(
            pool.ingest(&doc(json!([]))),
            Err(PoolError::DuplicateCompany(_))
        ));
    }
}
