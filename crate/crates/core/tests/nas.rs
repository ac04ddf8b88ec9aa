mod common;

use common::*;
use kpdebate::artifact::MemorySink;
use kpdebate::debate::Env;
use kpdebate::nas::{post_process, run_nas, AnalysisReport, NasParams, ReportError, SearchMode, REPORT_FILE, STAGES};
use kpdebate::pool::CompanyId;
use kpdebate::runtime::{Event, Journal, Locale, PromptTemplates, ScriptedBackend, ScriptedTranscript, ScriptedTurn, RoleId};
use serde_json::Value;

fn params(company: &str, mode: SearchMode) -> NasParams {
    NasParams {
        company: CompanyId::new(company),
        company_name: company.to_string(),
        model_id: "scripted".into(),
        policy: policy(),
        max_search: 5,
        search_mode: mode,
        locale: Locale("en".into()),
    }
}

fn nas_backend_for(company_text: &str) -> ScriptedBackend {
    ScriptedBackend::new(ScriptedTranscript {
        turns: vec![ScriptedTurn { role: RoleId::NasAnalyst, step: 1, text: company_text.into(), search: None }],
    })
    .unwrap()
}

#[test]
fn pipeline_runs_every_stage_and_persists_the_report() {
    let (pool, templates, backend, search, clock) =
        (pool(), PromptTemplates::builtin(), backend("nas_acme.json"), hits(), clock());
    let env = Env { pool: &pool, templates: &templates, backend: &backend, search: &search, clock: &clock };
    let mut journal = Journal::in_memory("t");
    let mut sink = MemorySink::default();
    let report = run_nas(env, &params("acme", SearchMode::Always), &mut journal, &mut sink).unwrap();

    let started: Vec<String> = journal
        .events()
        .filter_map(|e| match e {
            Event::StageStarted { stage } => Some(stage.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(started, STAGES);
    assert_eq!(report.topics.len(), 2);
    let meta = report.metadata.as_ref().unwrap();
    assert_eq!(meta.web_items, 2);
    assert_eq!(search.calls(), 1);

    let bytes = &sink.files[REPORT_FILE];
    let v: Value = serde_json::from_slice(bytes).unwrap();
    let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys, ["Analysis Summary", "metadata"]);
    assert_eq!(post_process(std::str::from_utf8(bytes).unwrap()).unwrap(), report);
}

#[test]
fn if_sparse_skips_search_when_the_pool_has_recent_news() {
    let (pool, templates, search, clock) = (pool(), PromptTemplates::builtin(), hits(), clock());
    let backend = backend("nas_acme.json");
    let env = Env { pool: &pool, templates: &templates, backend: &backend, search: &search, clock: &clock };
    let mut journal = Journal::in_memory("t");
    let report = run_nas(env, &params("acme", SearchMode::IfSparse), &mut journal, &mut MemorySink::default()).unwrap();
    assert_eq!(search.calls(), 0);
    assert_eq!(report.metadata.unwrap().web_items, 0);

    // borealis has no news in the window
    let text = serde_json::to_string(&serde_json::json!({"Analysis Summary": {
        "Favorable Factors Summary": [], "Adverse Factors Summary": [], "topics": []}}))
    .unwrap();
    let backend = nas_backend_for(&text);
    let env = Env { pool: &pool, templates: &templates, backend: &backend, search: &search, clock: &clock };
    run_nas(env, &params("borealis", SearchMode::IfSparse), &mut journal, &mut MemorySink::default()).unwrap();
    assert_eq!(search.calls(), 1);
}

#[test]
fn malformed_output_fails_in_post_process() {
    let (pool, templates, search, clock) = (pool(), PromptTemplates::builtin(), hits(), clock());
    let backend = nas_backend_for("I could not produce JSON today.");
    let env = Env { pool: &pool, templates: &templates, backend: &backend, search: &search, clock: &clock };
    let mut journal = Journal::in_memory("t");
    let mut sink = MemorySink::default();
    let err = run_nas(env, &params("acme", SearchMode::Always), &mut journal, &mut sink).unwrap_err();
    assert_eq!(err.stage, "post_process");
    assert!(sink.files.is_empty());
    assert!(journal.events().any(|e| matches!(e, Event::StageFailed { stage, .. } if stage == "post_process")));
}

#[test]
fn schema_issues_are_collected_with_paths() {
    let raw = r#"{"Analysis Summary": {"Favorable Factors Summary": "one", "topics": [{"topic": "x", "Affirmative": 3}]}}"#;
    let Err(ReportError::Schema(issues)) = post_process(raw) else { panic!() };
    let paths: Vec<_> = issues.iter().map(|i| i.path.as_str()).collect();
    assert_eq!(
        paths,
        ["Favorable Factors Summary", "Adverse Factors Summary", "topics[0].Affirmative", "topics[0].Adverse"]
    );
}

#[test]
fn sample_report_round_trips() {
    let text = std::fs::read_to_string(fixture("sample_analysis_report.json")).unwrap();
    let report: AnalysisReport = post_process(&text).unwrap();
    let original: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report.to_value(), original);
    assert_eq!(report.citations().len(), 2);
}

#[test]
fn unknown_company_fails_in_summarize() {
    let (pool, templates, search, clock) = (pool(), PromptTemplates::builtin(), hits(), clock());
    let backend = backend("nas_acme.json");
    let env = Env { pool: &pool, templates: &templates, backend: &backend, search: &search, clock: &clock };
    let err = run_nas(env, &params("zzz", SearchMode::Always), &mut Journal::in_memory("t"), &mut MemorySink::default())
        .unwrap_err();
    assert_eq!(err.stage, "summarize");
}
