#![allow(dead_code)]

use std::path::PathBuf;

use chrono::NaiveDate;
use kpdebate::clock::FixedClock;
use kpdebate::debate::{DebateParams, Strictness};
use kpdebate::pool::{CompanyId, KnowledgePool, RecencyPolicy};
use kpdebate::runtime::{Locale, ScriptedBackend, ScriptedTranscript, StaticSearch};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn as_of() -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 6, 30).unwrap()
}

pub fn policy() -> RecencyPolicy {
    RecencyPolicy::new(90, as_of()).unwrap()
}

pub fn clock() -> FixedClock {
    FixedClock::at_date(as_of())
}

pub fn pool() -> KnowledgePool {
    KnowledgePool::load_dir(&fixture("pool")).unwrap().0
}

pub fn script(name: &str) -> ScriptedTranscript {
    ScriptedTranscript::load(&fixture(name)).unwrap()
}

pub fn backend(name: &str) -> ScriptedBackend {
    ScriptedBackend::new(script(name)).unwrap()
}

pub fn hits() -> StaticSearch {
    StaticSearch::load(&fixture("search_hits.json")).unwrap()
}

pub fn debate_params(company: &str, strictness: Strictness) -> DebateParams {
    DebateParams {
        company: CompanyId::new(company),
        company_name: company.to_string(),
        model_id: "scripted".into(),
        policy: policy(),
        max_search: 5,
        strictness,
        locale: Locale("en".into()),
    }
}
