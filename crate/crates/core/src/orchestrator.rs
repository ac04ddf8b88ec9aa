//! End-to-end runs: wiring a configuration into collaborators, writing run
//! directories, and replaying journaled runs.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::artifact::{digest, ArtifactSink, DirSink};
use crate::clock::{Clock, FixedClock, WallClock};
use crate::config::{ClockMode, ConfigError, RunConfig, SearchKind};
use crate::debate::{run_debate, DebateError, DebateParams, Env};
use crate::guideline::FactorId;
use crate::nas::{run_nas, NasParams};
use crate::pool::{CompanyId, KnowledgePool, PoolError, RecencyPolicy};
use crate::report::{aggregate, polish, render_report, ReportContext};
use crate::runtime::{
    Backend, BackendError, BackendMode, Event, HttpSearchProvider, Journal, Locale, NoSearch,
    PromptTemplates, RemoteBackend, RemoteConfig, ScriptedBackend, ScriptedTranscript,
    ScriptedTurn, SearchProvider, StaticSearch,
};
use crate::schema::content_digest;

pub const TRANSCRIPT_FILE: &str = "transcript.json";
pub const PARTIAL_TRANSCRIPT_FILE: &str = "transcript.partial.json";
pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Instant used by the fixed clock when none is configured.
pub const DEFAULT_FIXED_TIME: &str = "2025-06-30T00:00:00Z";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Config,
    Backend,
    Validation,
    Runtime,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Usage => 2,
            Self::Config => 3,
            Self::Backend => 4,
            Self::Validation => 5,
            Self::Runtime => 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Setup(String),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Debate(#[from] DebateError),
    #[error(transparent)]
    Nas(#[from] crate::nas::NasError),
    #[error(transparent)]
    Synthesis(#[from] crate::report::SynthesisError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("replay: {0}")]
    Replay(String),
}

impl RunError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Self::Config(_) | Self::Setup(_) => ErrorCategory::Config,
            Self::Debate(DebateError::Backend { .. }) => ErrorCategory::Backend,
            Self::Debate(DebateError::HardViolation { .. } | DebateError::OrderBreach { .. }) => {
                ErrorCategory::Validation
            }
            Self::Debate(DebateError::Template(_)) => ErrorCategory::Config,
            Self::Nas(e) if e.stage == "generate" => ErrorCategory::Backend,
            Self::Nas(e) if e.stage == "post_process" => ErrorCategory::Validation,
            _ => ErrorCategory::Runtime,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Digest of every `*.json` file in `dir`, by name and content.
pub fn dir_digest(dir: &Path) -> Result<String, RunError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    let mut all = Vec::new();
    for p in entries {
        all.extend(p.file_name().unwrap_or_default().as_encoded_bytes());
        all.push(0);
        all.extend(fs::read(&p).map_err(io_err(&p))?);
        all.push(0);
    }
    Ok(digest(&all))
}

fn file_digest(path: &Path) -> Result<String, RunError> {
    Ok(digest(&fs::read(path).map_err(io_err(path))?))
}

/// Collaborators built from a [`RunConfig`].
pub struct Runtime {
    pub config: RunConfig,
    pub pool: KnowledgePool,
    pub templates: PromptTemplates,
    pub backend: Box<dyn Backend>,
    pub search: Box<dyn SearchProvider>,
    pub clock: Box<dyn Clock>,
}

impl Runtime {
    /// `env` supplies the API key for the remote backend.
    pub fn from_config(config: RunConfig, env: &HashMap<String, String>) -> Result<Self, RunError> {
        config.check()?;
        let backend: Box<dyn Backend> = match config.backend {
            BackendMode::Scripted => {
                let path = config.script.as_ref().expect("checked");
                let script = ScriptedTranscript::load(path).map_err(|e| RunError::Setup(e.to_string()))?;
                Box::new(ScriptedBackend::new(script).map_err(|e| RunError::Setup(e.to_string()))?)
            }
            BackendMode::Remote => {
                let key = config.api_key(env)?;
                let mut rc = RemoteConfig::new(config.endpoint.clone().expect("checked"), key);
                rc.timeout = Duration::from_secs(config.timeout_secs);
                Box::new(RemoteBackend::new(rc))
            }
        };
        Self::with_backend(config, backend)
    }

    pub fn with_backend(config: RunConfig, backend: Box<dyn Backend>) -> Result<Self, RunError> {
        let (pool, _) = KnowledgePool::load_dir(&config.pool_dir)?;
        let templates = match &config.templates_dir {
            Some(dir) => PromptTemplates::load_dir(dir).map_err(|e| RunError::Setup(e.to_string()))?,
            None => PromptTemplates::builtin(),
        };
        let search: Box<dyn SearchProvider> = match config.search {
            SearchKind::None => Box::new(NoSearch),
            SearchKind::Static => Box::new(
                StaticSearch::load(config.search_file.as_ref().expect("checked")).map_err(RunError::Setup)?,
            ),
            SearchKind::Http => Box::new(HttpSearchProvider::new(
                config.search_endpoint.clone().expect("checked"),
                String::new(),
                Duration::from_secs(config.timeout_secs),
            )),
        };
        let clock: Box<dyn Clock> = match config.clock {
            ClockMode::Wall => Box::new(WallClock::new()),
            ClockMode::Fixed => Box::new(FixedClock::new(
                config
                    .fixed_time
                    .unwrap_or_else(|| DEFAULT_FIXED_TIME.parse().expect("valid default")),
            )),
        };
        Ok(Self { config, pool, templates, backend, search, clock })
    }

    pub fn env(&self) -> Env<'_> {
        Env {
            pool: &self.pool,
            templates: &self.templates,
            backend: self.backend.as_ref(),
            search: self.search.as_ref(),
            clock: self.clock.as_ref(),
        }
    }

    pub fn policy(&self) -> Result<RecencyPolicy, RunError> {
        let as_of = self.config.as_of.unwrap_or_else(|| self.clock.today());
        RecencyPolicy::new(self.config.recency_days, as_of).ok_or_else(|| {
            RunError::Config(ConfigError::Invalid {
                field: "recency_days".into(),
                message: "must be at least 1".into(),
            })
        })
    }

    pub fn default_run_id(&self) -> String {
        self.clock.now().format("%Y%m%dT%H%M%S%3fZ").to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Nas,
    Debate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub file: String,
    pub digest: String,
    /// Digest with timestamps and elapsed times removed.
    pub content_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: Command,
    pub company_id: CompanyId,
    pub run_id: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: Vec<ArtifactEntry>,
    pub metadata: ManifestMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMeta {
    pub written_at: DateTime<Utc>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub error: Option<RunError>,
}

/// Records what went into the sink so the manifest can list it.
struct Recording<'a> {
    inner: &'a mut DirSink,
    written: Vec<ArtifactEntry>,
}

impl ArtifactSink for Recording<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<String> {
        let path = self.inner.write(name, bytes)?;
        self.written.push(ArtifactEntry {
            name: name.to_string(),
            file: self.inner.path_for(name).file_name().unwrap_or_default().to_string_lossy().into(),
            digest: digest(bytes),
            content_digest: content_digest(name, bytes),
        });
        Ok(path)
    }
}

fn inputs(config: &RunConfig) -> Result<BTreeMap<String, String>, RunError> {
    let mut out = BTreeMap::new();
    out.insert("pool".into(), dir_digest(&config.pool_dir)?);
    if let (SearchKind::Static, Some(f)) = (config.search, &config.search_file) {
        out.insert("search".into(), file_digest(f)?);
    }
    if let Some(dir) = &config.templates_dir {
        out.insert("templates".into(), dir.display().to_string());
    }
    Ok(out)
}

fn execute(
    rt: &Runtime,
    command: Command,
    company: &CompanyId,
    sink: &mut dyn ArtifactSink,
    journal: &mut Journal,
    transcript_file: &str,
) -> Result<(), RunError> {
    let env = rt.env();
    let policy = rt.policy()?;
    let locale = Locale(rt.config.locale.clone());
    match command {
        Command::Nas => {
            let params = NasParams {
                company: company.clone(),
                company_name: company.to_string(),
                model_id: rt.config.model_id.clone(),
                policy,
                max_search: rt.config.max_search,
                search_mode: rt.config.search_mode,
                locale,
            };
            run_nas(env, &params, journal, sink)?;
        }
        Command::Debate => {
            let params = DebateParams {
                company: company.clone(),
                company_name: company.to_string(),
                model_id: rt.config.model_id.clone(),
                policy,
                max_search: rt.config.max_search,
                strictness: rt.config.strictness,
                locale: locale.clone(),
            };
            let transcript = match run_debate(env, params, journal) {
                Ok(t) => t,
                Err(e) => {
                    if let Some(partial) = e.partial() {
                        let bytes = partial.to_json().into_bytes();
                        if let Ok(path) = sink.write(PARTIAL_TRANSCRIPT_FILE, &bytes) {
                            journal.record(env.clock, Event::ArtifactWritten { path, digest: digest(&bytes) });
                        }
                    }
                    return Err(e.into());
                }
            };
            let bytes = transcript.to_json().into_bytes();
            let path = sink.write(TRANSCRIPT_FILE, &bytes).map_err(|e| RunError::Setup(e.to_string()))?;
            journal.record(env.clock, Event::ArtifactWritten { path, digest: digest(&bytes) });

            journal.record(env.clock, Event::StageStarted { stage: "aggregate".into() });
            let ctx = ReportContext {
                transcript_ref: transcript_file.to_string(),
                company_name: company.to_string(),
                corporate_overview: rt.pool.company_summary_text(company).unwrap_or("").to_string(),
                pool_factors: pool_factors(&rt.pool, company),
            };
            let mut report = aggregate(&transcript, &ctx)?;
            if rt.config.polish {
                match polish(&report, env.backend, env.templates, &rt.config.model_id, &locale) {
                    Ok(p) => report = p,
                    Err(e) => journal.record(
                        env.clock,
                        Event::StageFailed { stage: "polish".into(), error: e.to_string() },
                    ),
                }
            }
            let bytes = render_report(&report)?.into_bytes();
            let path = sink
                .write(crate::report::REPORT_FILE, &bytes)
                .map_err(|e| RunError::Setup(e.to_string()))?;
            journal.record(env.clock, Event::ArtifactWritten { path, digest: digest(&bytes) });
            journal.record(env.clock, Event::StageCompleted { stage: "aggregate".into() });
        }
    }
    Ok(())
}

fn pool_factors(pool: &KnowledgePool, company: &CompanyId) -> Vec<FactorId> {
    let mut out: Vec<FactorId> = pool.items(company).iter().filter_map(|i| i.factor_tag).collect();
    out.sort();
    out.dedup();
    out
}

/// Runs one command for one company into `<out_dir>/<company>_<run_id>/`.
/// A failed run still leaves its journal and manifest behind.
pub fn run_command(rt: &Runtime, command: Command, company: &CompanyId, run_id: Option<&str>) -> Result<RunOutcome, RunError> {
    let run_id = run_id.map(str::to_string).unwrap_or_else(|| rt.default_run_id());
    let stem = format!("{company}_{run_id}");
    let run_dir = rt.config.out_dir.join(&stem);
    if run_dir.exists() {
        return Err(RunError::Setup(format!("run directory {} already exists", run_dir.display())));
    }
    fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
    let mut dir_sink = DirSink::new(&run_dir, &stem);
    let journal_path = dir_sink.path_for(JOURNAL_FILE);
    let mut journal = Journal::to_file(stem.clone(), &journal_path).map_err(io_err(&journal_path))?;
    let clock = rt.clock.as_ref();
    journal.record(
        clock,
        Event::RunStarted {
            command: format!("{command:?}").to_lowercase(),
            company_id: company.to_string(),
            model_id: rt.config.model_id.clone(),
        },
    );
    let transcript_file = format!("{stem}_{TRANSCRIPT_FILE}");
    let mut sink = Recording { inner: &mut dir_sink, written: Vec::new() };
    let result = execute(rt, command, company, &mut sink, &mut journal, &transcript_file);
    match &result {
        Ok(()) => journal.record(clock, Event::RunCompleted),
        Err(e) if !matches!(e, RunError::Debate(_) | RunError::Nas(_)) => {
            journal.record(clock, Event::RunAborted { reason: e.to_string() })
        }
        Err(_) => {}
    }
    let mut artifacts = sink.written;
    let journal_bytes = fs::read(&journal_path).map_err(io_err(&journal_path))?;
    artifacts.push(ArtifactEntry {
        name: JOURNAL_FILE.into(),
        file: format!("{stem}_{JOURNAL_FILE}"),
        digest: digest(&journal_bytes),
        content_digest: content_digest(JOURNAL_FILE, &journal_bytes),
    });
    let manifest = Manifest {
        command,
        company_id: company.clone(),
        run_id,
        status: if result.is_ok() { RunStatus::Completed } else { RunStatus::Aborted },
        error: result.as_ref().err().map(|e| e.to_string()),
        config: rt.config.clone(),
        inputs: inputs(&rt.config)?,
        artifacts,
        metadata: ManifestMeta { written_at: clock.now() },
    };
    let manifest_path = dir_sink.path_for(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;
    Ok(RunOutcome { run_dir, manifest, manifest_path, error: result.err() })
}

/// Runs `command` for each company with at most `workers` sessions at once.
/// Results come back in input order.
pub fn run_many(
    rt: &Runtime,
    command: Command,
    companies: &[CompanyId],
    workers: usize,
    run_id: Option<&str>,
) -> Vec<Result<RunOutcome, RunError>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunOutcome, RunError>>>> = companies.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, companies.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(company) = companies.get(i) else { break };
                let r = run_command(rt, command, company, run_id);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}

/// Rebuilds the model's responses from a journal so a run can be replayed
/// without the model.
pub fn script_from_journal(journal: &[crate::runtime::JournalLine]) -> ScriptedTranscript {
    let mut firsts: BTreeMap<(crate::runtime::RoleId, u8), String> = BTreeMap::new();
    let mut seconds: BTreeMap<(crate::runtime::RoleId, u8), String> = BTreeMap::new();
    for line in journal {
        if let Event::Generation { role, step, attempt, response, .. } = &line.event {
            let map = if *attempt == 0 { &mut firsts } else { &mut seconds };
            map.insert((*role, *step), response.clone());
        }
    }
    let turns = firsts
        .into_iter()
        .map(|((role, step), first)| match seconds.remove(&(role, step)) {
            Some(text) => ScriptedTurn {
                role,
                step,
                text,
                search: crate::debate::search_directive(&first).map(str::to_string),
            },
            None => ScriptedTurn { role, step, text: first, search: None },
        })
        .collect();
    ScriptedTranscript { turns }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactCheck {
    pub name: String,
    pub content_match: bool,
    /// Only compared when the original run used a fixed clock.
    pub bytes_match: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub run_dir: PathBuf,
    pub replay_dir: PathBuf,
    pub checks: Vec<ArtifactCheck>,
    pub identical: bool,
}

pub fn find_manifest(dir: &Path) -> Result<PathBuf, RunError> {
    if dir.is_file() {
        return Ok(dir.to_path_buf());
    }
    fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .find(|p| p.to_string_lossy().ends_with(&format!("_{MANIFEST_FILE}")))
        .ok_or_else(|| RunError::Replay(format!("no manifest in {}", dir.display())))
}

/// Re-executes a journaled run with responses taken from its journal and
/// compares the new artifacts with the recorded ones.
pub fn replay(dir: &Path) -> Result<ReplayReport, RunError> {
    let manifest_path = find_manifest(dir)?;
    let run_dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest: Manifest = serde_json::from_slice(&fs::read(&manifest_path).map_err(io_err(&manifest_path))?)
        .map_err(|e| RunError::Replay(format!("manifest: {e}")))?;
    if manifest.config.search == SearchKind::Http {
        return Err(RunError::Replay("runs with live web search cannot be replayed".into()));
    }
    let current = inputs(&manifest.config)?;
    if current != manifest.inputs {
        return Err(RunError::Replay("inputs changed since the run was recorded".into()));
    }
    let stem = format!("{}_{}", manifest.company_id, manifest.run_id);
    let journal_path = run_dir.join(format!("{stem}_{JOURNAL_FILE}"));
    let lines = crate::runtime::Journal::read(&journal_path).map_err(io_err(&journal_path))?;
    let backend = ScriptedBackend::new(script_from_journal(&lines)).map_err(|e: BackendError| RunError::Replay(e.to_string()))?;

    let replay_root = run_dir.join("replay");
    if replay_root.exists() {
        fs::remove_dir_all(&replay_root).map_err(io_err(&replay_root))?;
    }
    let mut config = manifest.config.clone();
    config.out_dir = replay_root.clone();
    let rt = Runtime::with_backend(config, Box::new(backend))?;
    let outcome = run_command(&rt, manifest.command, &manifest.company_id, Some(&manifest.run_id))?;

    let fixed = manifest.config.clock == ClockMode::Fixed;
    let mut checks = Vec::new();
    for original in &manifest.artifacts {
        let again = outcome.manifest.artifacts.iter().find(|a| a.name == original.name);
        checks.push(ArtifactCheck {
            name: original.name.clone(),
            content_match: again.is_some_and(|a| a.content_digest == original.content_digest),
            // journal lines name the run directory, so only content is compared
            bytes_match: (fixed && original.name != JOURNAL_FILE)
                .then(|| again.is_some_and(|a| a.digest == original.digest)),
        });
    }
    for extra in &outcome.manifest.artifacts {
        if !manifest.artifacts.iter().any(|a| a.name == extra.name) {
            checks.push(ArtifactCheck { name: extra.name.clone(), content_match: false, bytes_match: None });
        }
    }
    let identical = checks.iter().all(|c| c.content_match && c.bytes_match != Some(false));
    Ok(ReplayReport { run_dir, replay_dir: outcome.run_dir, checks, identical })
}

/// Convenience for tests and the CLI: parse a JSON artifact from disk.
pub fn read_json(path: &Path) -> Result<Value, RunError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| RunError::Setup(format!("{}: {e}", path.display())))
}
