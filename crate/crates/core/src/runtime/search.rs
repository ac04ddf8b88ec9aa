//! Web search behind the tool policy and a per-step budget.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::roles::{AgentRole, RoleId};
use crate::clock::Clock;
use crate::debate::detect_factors;
use crate::pool::{CompanyId, EvidenceItem, EvidenceKind, Origin, RecencyPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub query: String,
    pub max_items: usize,
    pub date_floor: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub snippet: String,
    #[serde(default)]
    pub date: Option<String>,
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub url: Option<String>,
}

pub trait SearchProvider: Send + Sync {
    fn search(&self, request: &SearchRequest) -> Result<Vec<SearchHit>, String>;
}

/// Never returns anything.
#[derive(Debug, Default)]
pub struct NoSearch;

impl SearchProvider for NoSearch {
    fn search(&self, _request: &SearchRequest) -> Result<Vec<SearchHit>, String> {
        Ok(Vec::new())
    }
}

/// Returns the same fixed hits for every query and counts calls.
#[derive(Debug, Default)]
pub struct StaticSearch {
    hits: Vec<SearchHit>,
    calls: AtomicUsize,
}

impl StaticSearch {
    pub fn new(hits: Vec<SearchHit>) -> Self {
        Self {
            hits,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let hits = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(Self::new(hits))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl SearchProvider for StaticSearch {
    fn search(&self, _request: &SearchRequest) -> Result<Vec<SearchHit>, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.hits.clone())
    }
}

/// POSTs `{query, max_items, date_floor}` and expects a JSON array of hits.
pub struct HttpSearchProvider {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
}

impl HttpSearchProvider {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            endpoint: endpoint.into(),
            api_key: api_key.into(),
        }
    }
}

impl SearchProvider for HttpSearchProvider {
    fn search(&self, request: &SearchRequest) -> Result<Vec<SearchHit>, String> {
        let mut req = self.agent.post(&self.endpoint);
        if !self.api_key.is_empty() {
            req = req.header("Authorization", &format!("Bearer {}", self.api_key));
        }
        let body = json!({
            "query": request.query,
            "max_items": request.max_items,
            "date_floor": request.date_floor.to_string(),
        });
        let mut resp = req.send_json(&body).map_err(|e| e.to_string())?;
        resp.body_mut()
            .read_json::<Vec<SearchHit>>()
            .map_err(|e| e.to_string())
    }
}

/// `max_items` bounds the items kept per call; `max_calls` bounds calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SearchBudget {
    max_items: usize,
    max_calls: u32,
    calls_used: u32,
}

impl SearchBudget {
    pub fn new(max_items: usize, max_calls: u32) -> Self {
        Self {
            max_items,
            max_calls,
            calls_used: 0,
        }
    }

    pub fn max_items(&self) -> usize {
        self.max_items
    }

    pub fn calls_used(&self) -> u32 {
        self.calls_used
    }

    pub fn exhausted(&self) -> bool {
        self.max_items == 0 || self.calls_used >= self.max_calls
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Items(Vec<EvidenceItem>),
    BudgetExhausted,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("role {0} is not permitted to search")]
    PermissionDenied(RoleId),
    #[error("search provider failed: {0}")]
    Provider(String),
}

impl SearchError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Provider(_))
    }
}

pub fn web_search(
    role: &AgentRole,
    company: &CompanyId,
    query: &str,
    policy: &RecencyPolicy,
    budget: &mut SearchBudget,
    provider: &dyn SearchProvider,
    clock: &dyn Clock,
) -> Result<SearchOutcome, SearchError> {
    if !role.search_allowed {
        return Err(SearchError::PermissionDenied(role.id));
    }
    if budget.exhausted() {
        return Ok(SearchOutcome::BudgetExhausted);
    }
    let request = SearchRequest {
        query: query.to_string(),
        max_items: budget.max_items,
        date_floor: policy.floor(),
    };
    // a failed provider call does not use up the allowance
    let hits = provider.search(&request).map_err(SearchError::Provider)?;
    budget.calls_used += 1;
    let now = clock.now();
    let items = hits
        .into_iter()
        .filter_map(|hit| hit_to_item(hit, company))
        .take(budget.max_items)
        .map(|mut item| {
            item.retrieved_at = Some(now);
            item
        })
        .collect();
    Ok(SearchOutcome::Items(items))
}

pub(crate) fn parse_loose_date(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    let head = raw.get(..10).unwrap_or(raw);
    ["%Y-%m-%d", "%Y/%m/%d", "%Y.%m.%d"]
        .iter()
        .find_map(|fmt| NaiveDate::parse_from_str(head, fmt).ok())
}

fn hit_to_item(hit: SearchHit, company: &CompanyId) -> Option<EvidenceItem> {
    let date = hit.date.as_deref().and_then(parse_loose_date)?;
    let source = hit
        .source
        .as_deref()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .or_else(|| hit.url.as_deref().and_then(url_host))?;
    let content = match (hit.title.is_empty(), hit.snippet.is_empty()) {
        (false, false) => format!("{}: {}", hit.title, hit.snippet),
        (false, true) => hit.title.clone(),
        _ => hit.snippet.clone(),
    };
    Some(EvidenceItem {
        company_id: company.clone(),
        kind: EvidenceKind::News,
        factor_tag: detect_factors(&content).into_iter().next(),
        content,
        value: None,
        unit: None,
        date,
        source,
        origin: Origin::WebSearch,
        retrieved_at: None,
        url: hit.url,
    })
}

fn url_host(url: &str) -> Option<String> {
    let rest = url.split("://").nth(1)?;
    let host = rest.split(['/', '?', '#']).next()?;
    (!host.is_empty()).then(|| host.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;

    fn policy() -> RecencyPolicy {
        RecencyPolicy::new(90, NaiveDate::from_ymd_opt(2025, 6, 30).unwrap()).unwrap()
    }

    fn clock() -> FixedClock {
        FixedClock::at_date(NaiveDate::from_ymd_opt(2025, 6, 30).unwrap())
    }

    fn hit(date: Option<&str>, source: Option<&str>) -> SearchHit {
        SearchHit {
            title: "Acme wins government support grant".into(),
            snippet: "".into(),
            date: date.map(str::to_string),
            source: source.map(str::to_string),
            url: Some("https://news.example.com/a".into()),
        }
    }

    #[test]
    fn synthesis_roles_are_denied_without_spending_budget() {
        let provider = StaticSearch::new(vec![hit(Some("2025-06-01"), Some("Daily"))]);
        let mut budget = SearchBudget::new(3, 1);
        for role in [RoleId::A3, RoleId::N3, RoleId::Aggregator, RoleId::NasAnalyst] {
            let err = web_search(
                &role.into(),
                &CompanyId::new("A"),
                "q",
                &policy(),
                &mut budget,
                &provider,
                &clock(),
            )
            .unwrap_err();
            assert_eq!(err, SearchError::PermissionDenied(role));
        }
        assert_eq!(budget.calls_used(), 0);
        assert_eq!(provider.calls(), 0);
    }

    #[test]
    fn zero_budget_makes_no_provider_call() {
        let provider = StaticSearch::new(vec![hit(Some("2025-06-01"), Some("Daily"))]);
        let mut budget = SearchBudget::new(0, 1);
        let out = web_search(
            &RoleId::A1.into(),
            &CompanyId::new("A"),
            "q",
            &policy(),
            &mut budget,
            &provider,
            &clock(),
        )
        .unwrap();
        assert_eq!(out, SearchOutcome::BudgetExhausted);
        assert_eq!(provider.calls(), 0);
    }

    #[test]
    fn results_are_truncated_and_dated() {
        let hits: Vec<_> = (1..=5)
            .map(|d| hit(Some(&format!("2025-06-0{d}")), Some("Daily")))
            .collect();
        let provider = StaticSearch::new(hits);
        let mut budget = SearchBudget::new(3, 1);
        let SearchOutcome::Items(items) = web_search(
            &RoleId::N2.into(),
            &CompanyId::new("A"),
            "q",
            &policy(),
            &mut budget,
            &provider,
            &clock(),
        )
        .unwrap() else {
            panic!("expected items")
        };
        assert_eq!(items.len(), 3);
        assert!(items.iter().all(|i| i.origin == Origin::WebSearch && i.retrieved_at.is_some()));
        assert_eq!(items[0].factor_tag, Some(crate::guideline::FactorId::GovernmentSupport));
        assert_eq!(budget.calls_used(), 1);
        // second call in the same step is over budget
        let again = web_search(
            &RoleId::N2.into(),
            &CompanyId::new("A"),
            "q",
            &policy(),
            &mut budget,
            &provider,
            &clock(),
        )
        .unwrap();
        assert_eq!(again, SearchOutcome::BudgetExhausted);
    }

    #[test]
    fn undated_hits_are_dropped_and_source_falls_back_to_host() {
        let provider = StaticSearch::new(vec![hit(None, Some("Daily")), hit(Some("2025/05/02"), None)]);
        let mut budget = SearchBudget::new(5, 1);
        let SearchOutcome::Items(items) = web_search(
            &RoleId::A2.into(),
            &CompanyId::new("A"),
            "q",
            &policy(),
            &mut budget,
            &provider,
            &clock(),
        )
        .unwrap() else {
            panic!()
        };
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].source, "news.example.com");
        assert_eq!(items[0].date.to_string(), "2025-05-02");
    }
}
