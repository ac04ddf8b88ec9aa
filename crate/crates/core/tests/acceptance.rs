//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use kpdebate::config::{ClockMode, RunConfig, SearchKind};
use kpdebate::debate::{
    citation_violations, extract_structure, run_debate, step_spec, Env, Strictness, StepSources, Transcript, SCHEDULE,
};
use kpdebate::guideline::FactorId;
use kpdebate::metrics::{compute_rei, load_tree};
use kpdebate::nas::post_process;
use kpdebate::orchestrator::{run_command, Command, Runtime};
use kpdebate::pool::CompanyId;
use kpdebate::report::{aggregate, ReportContext, SourceRef};
use kpdebate::runtime::{
    Event, Journal, PromptTemplates, RoleId, ScriptedBackend, ScriptedTranscript, ScriptedTurn, SearchOutcomeTag,
};
use kpdebate::stats::{exact_p, latency_summary, median, read_latency, read_pairs, wilcoxon_signed_rank, Method};
use kpdebate::violation::{Severity, ViolationKind};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use serde_json::Value;

type Outcome = Result<String, String>;

struct Report {
    failed: usize,
}

impl Report {
    fn run(&mut self, id: &str, title: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let mut result = f();
        let took = start.elapsed();
        if result.is_ok() && took > budget {
            result = Err(format!("took {took:.2?}, budget {budget:?}"));
        }
        match result {
            Ok(detail) => println!("PASS  {id:<4} {title} ({detail}; {took:.2?})"),
            Err(why) => {
                self.failed += 1;
                println!("FAIL  {id:<4} {title}: {why}");
            }
        }
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_rei() -> Outcome {
    let cells = [
        ("companyA_nas", 7, 7),
        ("companyB_nas", 8, 8),
        ("companyC_nas", 9, 9),
        ("companyA_kpd", 6, 12),
        ("companyB_kpd", 7, 13),
        ("companyC_kpd", 6, 18),
    ];
    for (name, breadth, rei) in cells {
        let text = fs::read_to_string(fixture(&format!("trees/{name}.json"))).map_err(|e| e.to_string())?;
        let r = compute_rei(&load_tree(&text).map_err(|e| e.to_string())?);
        check((r.breadth, r.rei) == (breadth, rei), || {
            format!("{name}: breadth {} REI {}, expected {breadth}/{rei}", r.breadth, r.rei)
        })?;
    }
    Ok("NAS 7/8/9, KPD 12/13/18".into())
}

fn c2_wilcoxon() -> Outcome {
    let cases = [
        ("a", "ratings_explanatory.csv", 12, 0.0, -3.059, -0.883),
        ("b", "ratings_trust.csv", 9, 10.5, -1.422, -0.474),
        ("c", "ratings_sus.csv", 12, 9.0, -2.353, -0.679),
    ];
    let mut parts = Vec::new();
    for (tag, file, n, w, z, r) in cases {
        let pairs = read_pairs(File::open(fixture(file)).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let res = wilcoxon_signed_rank(&pairs, Method::NormalApprox).map_err(|e| e.to_string())?;
        check(res.n_effective == n && res.w_statistic == w, || {
            format!("({tag}) n={} W={}, expected n={n} W={w}", res.n_effective, res.w_statistic)
        })?;
        check((res.z - z).abs() <= 0.001 && (res.effect_r - r).abs() <= 0.001, || {
            format!("({tag}) z={:.4} r={:.4}, expected {z}/{r} ±0.001", res.z, res.effect_r)
        })?;
        parts.push(format!("({tag}) z={:.3} r={:.3} p={:.3}", res.z, res.effect_r, res.p_two_sided));
    }
    Ok(parts.join(", "))
}

fn brute_force_p(ranks: &[f64], t_plus: f64) -> f64 {
    let n = ranks.len();
    let (mut lower, mut upper) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        let t: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        if t <= t_plus + 1e-9 {
            lower += 1;
        }
        if t >= t_plus - 1e-9 {
            upper += 1;
        }
    }
    (2.0 * lower.min(upper) as f64 / (1u64 << n) as f64).min(1.0)
}

fn c3_exact_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xC3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..=10);
        let mut mags: Vec<u32> = (1..=40).collect();
        let mut pairs = Vec::new();
        for i in 0..n {
            let k = rng.random_range(0..mags.len());
            let m = f64::from(mags.swap_remove(k));
            let d = if rng.random_bool(0.5) { m } else { -m };
            pairs.push(kpdebate::stats::PairedSample::new(format!("u{i}"), d, 0.0));
        }
        let res = wilcoxon_signed_rank(&pairs, Method::Exact).map_err(|e| e.to_string())?;
        let mut abs: Vec<(f64, f64)> = pairs.iter().map(|p| (p.score_a.abs(), p.score_a)).collect();
        abs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ranks: Vec<f64> = (1..=n).map(|k| k as f64).collect();
        let t_plus: f64 = abs.iter().zip(&ranks).filter(|((_, d), _)| *d > 0.0).map(|(_, r)| r).sum();
        let oracle = brute_force_p(&ranks, t_plus);
        let diff = (res.p_two_sided - oracle).abs();
        worst = worst.max(diff);
        check(diff <= 1e-12, || format!("n={n}: exact {} vs enumeration {oracle}", res.p_two_sided))?;
        check((exact_p(&ranks, t_plus) - oracle).abs() <= 1e-12, || "exact_p disagrees".into())?;
    }
    Ok(format!("50 datasets, max |diff| {worst:.1e}"))
}

fn c4_latency() -> Outcome {
    let records =
        read_latency(File::open(fixture("latency.csv")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let s = latency_summary(&records).map_err(|e| e.to_string())?;
    let (nas, kpd) = (s["NAS"].mean, s["KPD"].mean);
    check(nas == 11.55 && kpd == 91.97, || format!("means {nas}/{kpd}, expected 11.55/91.97"))?;
    Ok(format!("NAS {nas}, KPD {kpd}; arithmetic only, live latency needs the hosted model"))
}

const SOURCES: [&str; 6] = ["KOSIS", "DART", "Korea Economic Daily", "ETNews", "news.example.com", "NPS"];

fn alias(f: FactorId) -> &'static str {
    f.spec().aliases[0]
}

fn random_citation(rng: &mut StdRng) -> String {
    let date = format!("2025-0{}-{:02}", rng.random_range(1..=6), rng.random_range(1..=28));
    let src = *SOURCES.choose(rng).unwrap();
    match rng.random_range(0..6) {
        0 => format!(" ({src}, {date})"),
        1 => format!(" (n.d., {src})"),
        2 => format!(" ({date})"),
        3 => format!(" Source: '{src}'."),
        _ => format!(" ({date}, {src})"),
    }
}

fn random_text(rng: &mut StdRng, step: u8) -> String {
    let spec = step_spec(step).unwrap();
    let k = rng.random_range(0..=4);
    let factors: Vec<FactorId> = FactorId::ALL.choose_multiple(rng, k).copied().collect();
    let mut text = String::new();
    for f in factors {
        text.push_str(&format!("The {} signal matters here", alias(f)));
        if rng.random_bool(0.7) {
            text.push_str(&random_citation(rng));
        }
        text.push_str(". ");
    }
    if spec.required_questions.is_some() {
        for _ in 0..rng.random_range(0..=4) {
            text.push_str("Is that evidence current? ");
        }
    }
    if text.is_empty() {
        text.push_str("Nothing further.");
    }
    text
}

fn random_script(rng: &mut StdRng) -> ScriptedTranscript {
    let turns = SCHEDULE
        .iter()
        .map(|s| ScriptedTurn {
            role: s.speaker,
            step: s.index,
            text: random_text(rng, s.index),
            search: rng.random_bool(0.3).then(|| "acme latest news".to_string()),
        })
        .collect();
    ScriptedTranscript { turns }
}

fn random_debate(rng: &mut StdRng, company: &str) -> Result<(Transcript, Journal, usize), String> {
    let pool = pool();
    let templates = PromptTemplates::builtin();
    let backend = ScriptedBackend::new(random_script(rng)).map_err(|e| e.to_string())?;
    let search = hits();
    let clock = clock();
    let env = Env { pool: &pool, templates: &templates, backend: &backend, search: &search, clock: &clock };
    let mut journal = Journal::in_memory("acceptance");
    let t = run_debate(env, debate_params(company, Strictness::RecordOnly), &mut journal).map_err(|e| e.to_string())?;
    Ok((t, journal, search.calls()))
}

fn c5_protocol() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xC5);
    let mut denied = 0;
    for run in 0..100 {
        let company = if run % 2 == 0 { "acme" } else { "borealis" };
        let (t, journal, provider_calls) = random_debate(&mut rng, company)?;
        let order: Vec<u8> = journal
            .events()
            .filter_map(|e| match e {
                Event::StepStarted { step, .. } => Some(*step),
                _ => None,
            })
            .collect();
        check(order == (1..=10).collect::<Vec<_>>(), || format!("run {run}: step order {order:?}"))?;
        let ctx = |i: u8| t.step(i).map(|u| u.context.clone()).unwrap_or_default();
        check(ctx(9) == [1, 2, 5, 8] && ctx(10) == [3, 4, 7, 6], || format!("run {run}: closing contexts"))?;

        let mut ok_calls = 0;
        for e in journal.events() {
            if let Event::Search { role, outcome, .. } = e {
                if *outcome == SearchOutcomeTag::Ok {
                    ok_calls += 1;
                    check(role.search_allowed(), || format!("run {run}: successful search by {role}"))?;
                }
                if *outcome == SearchOutcomeTag::Denied {
                    denied += 1;
                    check(
                        matches!(role, RoleId::A3 | RoleId::N3 | RoleId::Aggregator),
                        || format!("run {run}: {role} denied"),
                    )?;
                }
            }
        }
        check(ok_calls == provider_calls, || format!("run {run}: {provider_calls} provider calls, {ok_calls} journaled"))?;

        for closing in [9u8, 10] {
            let u = t.step(closing).ok_or("missing closing")?;
            let flagged = u.violations.iter().any(|v| v.kind == ViolationKind::NewFactorInClosing);
            if !flagged {
                let union: BTreeSet<FactorId> =
                    u.context.iter().flat_map(|s| t.step(*s).unwrap().factors.clone()).collect();
                check(u.factors.iter().all(|f| union.contains(f)), || {
                    format!("run {run}: step {closing} factors outside context without a violation")
                })?;
            }
        }
    }
    Ok(format!("100 debates, {denied} denied searches by synthesis roles"))
}

#[derive(serde::Deserialize)]
struct DefectCase {
    id: u32,
    step: u8,
    text: String,
    web_sources: Vec<String>,
    expected: Vec<(ViolationKind, Severity)>,
}

fn c6_citation_policy() -> Outcome {
    let raw = fs::read_to_string(fixture("citation_defects.json")).map_err(|e| e.to_string())?;
    let cases: Vec<DefectCase> = serde_json::from_str(&raw).map_err(|e| e.to_string())?;
    check(cases.len() == 20, || format!("{} cases, expected 20", cases.len()))?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut misses = Vec::new();
    for c in &cases {
        let spec = step_spec(c.step).ok_or("bad step")?;
        let sources = StepSources { context_factors: BTreeSet::new(), web_sources: c.web_sources.clone() };
        let got = citation_violations(c.step, spec.kind, &extract_structure(&c.text), &sources);
        let mut want: BTreeMap<(ViolationKind, Severity), i32> = BTreeMap::new();
        for k in &c.expected {
            *want.entry(*k).or_default() += 1;
        }
        let mut have: BTreeMap<(ViolationKind, Severity), i32> = BTreeMap::new();
        for v in &got {
            *have.entry((v.kind, v.severity)).or_default() += 1;
        }
        for key in want.keys().chain(have.keys()).collect::<BTreeSet<_>>() {
            let (w, h) = (want.get(key).copied().unwrap_or(0), have.get(key).copied().unwrap_or(0));
            tp += w.min(h) as usize;
            fp += (h - w).max(0) as usize;
            fn_ += (w - h).max(0) as usize;
        }
        if want != have {
            misses.push(c.id);
        }
    }
    let precision = tp as f64 / (tp + fp).max(1) as f64;
    let recall = tp as f64 / (tp + fn_).max(1) as f64;
    check(misses.is_empty(), || format!("precision {precision:.2} recall {recall:.2}, mismatched cases {misses:?}"))?;
    Ok(format!("{tp} seeded defects, precision {precision:.2} recall {recall:.2}"))
}

fn scripted_run(out: &Path, command: Command, script: &str) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let cfg = RunConfig {
        script: Some(fixture(script)),
        search: SearchKind::Static,
        search_file: Some(fixture("search_hits.json")),
        pool_dir: fixture("pool"),
        out_dir: out.to_path_buf(),
        clock: ClockMode::Fixed,
        locale: "en".into(),
        ..RunConfig::default()
    };
    let rt = Runtime::from_config(cfg, &Default::default()).map_err(|e| e.to_string())?;
    let outcome = run_command(&rt, command, &CompanyId::new("acme"), None).map_err(|e| e.to_string())?;
    if let Some(e) = outcome.error {
        return Err(e.to_string());
    }
    outcome
        .manifest
        .artifacts
        .iter()
        .filter(|a| a.name != "journal.jsonl")
        .map(|a| Ok((a.name.clone(), fs::read(outcome.run_dir.join(&a.file)).map_err(|e| e.to_string())?)))
        .collect()
}

fn c7_determinism() -> Outcome {
    let mut compared = Vec::new();
    for (command, script) in [(Command::Nas, "nas_acme.json"), (Command::Debate, "debate_acme.json")] {
        let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
        let first = scripted_run(a.path(), command, script)?;
        let second = scripted_run(b.path(), command, script)?;
        check(first == second, || format!("{command:?} artifacts differ"))?;
        compared.extend(first.keys().cloned());
    }
    Ok(format!("byte-identical: {}", compared.join(", ")))
}

fn normalize(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let sorted: BTreeMap<&String, Value> = m.iter().map(|(k, v)| (k, normalize(v))).collect();
            Value::Object(sorted.into_iter().map(|(k, v)| (k.clone(), v)).collect())
        }
        Value::Array(a) => Value::Array(a.iter().map(normalize).collect()),
        other => other.clone(),
    }
}

fn c8_round_trip() -> Outcome {
    let text = fs::read_to_string(fixture("sample_analysis_report.json")).map_err(|e| e.to_string())?;
    let original: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let report = post_process(&text).map_err(|e| e.to_string())?;
    let again: Value = serde_json::from_str(&report.render()).map_err(|e| e.to_string())?;
    check(normalize(&again).to_string() == normalize(&original).to_string(), || "re-rendered JSON differs".into())?;
    Ok(format!("{} topic(s), {} summary lines", report.topics.len(), report.favorable_summary.len() + report.adverse_summary.len()))
}

fn c9_conservation() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xC9);
    let mut total = 0;
    for run in 0..100 {
        let (t, _, _) = random_debate(&mut rng, "acme")?;
        let mut expected: BTreeMap<SourceRef, usize> = BTreeMap::new();
        for c in t.citations() {
            *expected.entry(SourceRef::from(c)).or_default() += 1;
        }
        let report = aggregate(&t, &ReportContext::default()).map_err(|e| e.to_string())?;
        check(report.citation_multiset() == expected, || format!("run {run}: citation multiset changed"))?;
        total += expected.values().sum::<usize>();
    }
    Ok(format!("100 transcripts, {total} citations conserved"))
}

fn ratings_medians() -> Outcome {
    let cases = [("ratings_trust.csv", 3.0, 4.0), ("ratings_explanatory.csv", 3.0, 4.0), ("ratings_sus.csv", 52.5, 62.5)];
    for (file, nas, kpd) in cases {
        let rows = read_pairs(File::open(fixture(file)).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let a = median(&rows.iter().map(|p| p.score_a).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
        let b = median(&rows.iter().map(|p| p.score_b).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
        check((a, b) == (nas, kpd), || format!("{file}: medians {a}/{b}, expected {nas}/{kpd}"))?;
    }
    Ok("synthetic CSVs: 3.0 vs 4.0 twice, SUS 52.5 vs 62.5".into())
}

fn main() {
    let mut r = Report { failed: 0 };
    let s = Duration::from_secs;
    r.run("1", "REI reproduction", s(1), c1_rei);
    r.run("2", "Wilcoxon z and r", s(1), c2_wilcoxon);
    r.run("3", "exact p vs enumeration", s(10), c3_exact_oracle);
    r.run("4", "latency arithmetic", s(1), c4_latency);
    r.run("5", "protocol conformance", s(30), c5_protocol);
    r.run("6", "citation policy fixture", s(1), c6_citation_policy);
    r.run("7", "determinism", s(10), c7_determinism);
    r.run("8", "report round-trip", s(1), c8_round_trip);
    r.run("9", "aggregation conservation", s(30), c9_conservation);
    r.run("R", "rating medians", s(1), ratings_medians);
    if r.failed > 0 {
        println!("{} criterion(s) failed", r.failed);
        std::process::exit(1);
    }
}
