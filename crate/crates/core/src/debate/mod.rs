//! The ten-turn debate: schedule, text analysis, validation and the
//! session state machine that drives agents through it.

mod extract;
mod schedule;
mod transcript;
mod validate;

pub use extract::{count_questions, detect_factors, extract_structure, sentence_spans, Citation, Structure};
pub use schedule::{scripted_keys, step_spec, DebateStepSpec, StepKind, SCHEDULE};
pub use transcript::{Closing, SessionInfo, Strictness, Transcript, TranscriptError, Utterance};
pub use validate::{citation_violations, validate_step, StepSources};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::clock::{Clock, Stopwatch};
use crate::guideline::FactorUsageLedger;
use crate::pool::{CompanyId, EvidenceItem, KnowledgePool, RecencyPolicy};
use crate::runtime::{
    instantiate_agents, web_search, AgentSet, Backend, BackendError, ContextEntry, Event,
    GenerationRequest, Journal, Locale, PromptBundle, PromptTemplates, SearchBudget,
    SearchError, SearchOutcome, SearchOutcomeTag, SearchProvider, TemplateError, TemplateVars,
};
use crate::violation::{Violation, ViolationKind};

/// Shared, read-only collaborators of a run.
#[derive(Clone, Copy)]
pub struct Env<'a> {
    pub pool: &'a KnowledgePool,
    pub templates: &'a PromptTemplates,
    pub backend: &'a dyn Backend,
    pub search: &'a dyn SearchProvider,
    pub clock: &'a dyn Clock,
}

#[derive(Debug, Clone)]
pub struct DebateParams {
    pub company: CompanyId,
    pub company_name: String,
    pub model_id: String,
    pub policy: RecencyPolicy,
    /// Items per search call; 0 disables searching.
    pub max_search: usize,
    pub strictness: Strictness,
    pub locale: Locale,
}

#[derive(Debug, Error)]
pub enum DebateError {
    #[error("company {0} is not in the knowledge pool")]
    UnknownCompany(CompanyId),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("step {got} requested but step {expected} is next")]
    OrderBreach { expected: u8, got: u8 },
    #[error("backend failed at step {step}: {source}")]
    Backend {
        step: u8,
        source: BackendError,
        partial: Box<Transcript>,
    },
    #[error("hard violation at step {step}: {}", violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    HardViolation {
        step: u8,
        violations: Vec<Violation>,
        partial: Box<Transcript>,
    },
    #[error("the debate stopped after step {0}")]
    Incomplete(u8),
}

impl DebateError {
    /// The transcript as it stood when the run stopped, if any.
    pub fn partial(&self) -> Option<&Transcript> {
        match self {
            Self::Backend { partial, .. } | Self::HardViolation { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// Company overview plus recency-ranked evidence lines, as injected into
/// prompts.
pub fn evidence_block(pool: &KnowledgePool, company: &CompanyId, policy: &RecencyPolicy) -> String {
    let mut out = String::from("[Company Summary]\n");
    out.push_str(pool.company_summary_text(company).unwrap_or(""));
    out.push_str("\n\n[company_data]\n");
    for item in pool.retrieve(company, policy).items {
        let marker = if policy.in_window(item.date) { "" } else { " (outside recency window)" };
        out.push_str(&format!("- {}{}\n", item.render_line(), marker));
    }
    out
}

pub fn render_web_results(items: &[EvidenceItem]) -> String {
    let mut out = String::from("[Latest Web Search Results]\n");
    if items.is_empty() {
        out.push_str("(no dated results)\n");
    }
    for item in items {
        out.push_str(&format!("- {}", item.render_line()));
        if let Some(url) = &item.url {
            out.push_str(&format!(" <{url}>"));
        }
        out.push('\n');
    }
    out
}

/// The query of a `SEARCH: ...` directive line, if the response holds one.
pub fn search_directive(response: &str) -> Option<&str> {
    response.lines().find_map(|l| {
        l.trim()
            .strip_prefix("SEARCH:")
            .map(str::trim)
            .filter(|q| !q.is_empty())
    })
}

fn strip_directives(response: &str) -> String {
    response
        .lines()
        .filter(|l| !l.trim().starts_with("SEARCH:"))
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

/// Drives one debate through the fixed schedule, one step at a time.
pub struct DebateSession<'a> {
    env: Env<'a>,
    params: DebateParams,
    journal: &'a mut Journal,
    agents: AgentSet,
    vars: TemplateVars,
    evidence: String,
    ledger: FactorUsageLedger,
    transcript: Transcript,
    stopwatch: Stopwatch<'a>,
    next: u8,
}

impl<'a> DebateSession<'a> {
    pub fn start(env: Env<'a>, params: DebateParams, journal: &'a mut Journal) -> Result<Self, DebateError> {
        if !env.pool.contains(&params.company) {
            return Err(DebateError::UnknownCompany(params.company));
        }
        let mut vars = TemplateVars::default()
            .with_locale(&params.locale)
            .with_company(&params.company_name);
        vars.set("recency_days", params.policy.window_days().to_string());
        vars.set("as_of", params.policy.as_of.to_string());
        let agents = instantiate_agents(env.templates, &vars)?;
        let evidence = evidence_block(env.pool, &params.company, &params.policy);
        journal.record(env.clock, Event::StageStarted { stage: "debate".into() });
        let transcript = Transcript {
            session: SessionInfo {
                company_id: params.company.clone(),
                model_id: params.model_id.clone(),
                strictness: params.strictness,
                as_of: params.policy.as_of,
                recency_days: params.policy.window_days(),
                violations: Vec::new(),
                started_at: env.clock.now(),
                elapsed_seconds: 0.0,
            },
            steps: Vec::new(),
            closing_pro: None,
            closing_con: None,
        };
        Ok(Self {
            stopwatch: Stopwatch::start(env.clock),
            env,
            params,
            journal,
            agents,
            vars,
            evidence,
            ledger: FactorUsageLedger::new(),
            transcript,
            next: 1,
        })
    }

    /// The step that may run next, or `None` once all ten are done.
    pub fn next_step(&self) -> Option<u8> {
        (self.next <= 10).then_some(self.next)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    fn note(&mut self, v: Violation) {
        self.journal.record(
            self.env.clock,
            Event::Violation { violation: v.clone() },
        );
    }

    fn partial(&self) -> Box<Transcript> {
        let mut t = self.transcript.clone();
        t.session.elapsed_seconds = self.stopwatch.elapsed_seconds();
        t.set_closings();
        Box::new(t)
    }

    /// Runs step `index`. Anything but the next scheduled step is refused
    /// and recorded as an order breach.
    pub fn execute_step(&mut self, index: u8) -> Result<&Utterance, DebateError> {
        let Some(expected) = self.next_step().filter(|&n| n == index) else {
            let expected = self.next;
            let v = Violation::hard(
                ViolationKind::OrderBreach,
                index,
                format!("step {index} requested while step {expected} is next"),
            );
            self.transcript.session.violations.push(v.clone());
            self.note(v);
            return Err(DebateError::OrderBreach { expected, got: index });
        };
        let spec = step_spec(expected).expect("scheduled step");
        let watch = Stopwatch::start(self.env.clock);
        let clock = self.env.clock;
        self.journal.record(
            clock,
            Event::StepStarted {
                step: spec.index,
                speaker: spec.speaker,
                context: spec.context.to_vec(),
            },
        );

        let agent = self.agents.get(spec.speaker).clone();
        let task = format!(
            "{}\n\n{}",
            self.env.templates.step_task(spec.index, &self.vars),
            self.evidence
        );
        let mut bundle = PromptBundle::new(spec.speaker, agent.system.clone(), task, self.params.locale.clone());
        let mut context_factors = BTreeSet::new();
        for &c in spec.context {
            let u = self.transcript.step(c).expect("context precedes step");
            context_factors.extend(u.factors.iter().copied());
            bundle.context.push(ContextEntry {
                step: u.index,
                speaker: u.speaker,
                text: u.text.clone(),
            });
        }

        let mut budget = SearchBudget::new(self.params.max_search, 1);
        let mut web: Vec<EvidenceItem> = Vec::new();
        let mut step_violations = Vec::new();

        if spec.kind == StepKind::Constructive && agent.role.search_allowed && self.pool_is_sparse() {
            let query = match spec.index {
                1 => format!("{} latest news", self.params.company_name),
                _ => format!("{} latest trends", self.params.company_name),
            };
            if let Some(items) = self.search(&agent.role, spec.index, &query, &mut budget) {
                web.extend(items);
                bundle.supplement = Some(render_web_results(&web));
            }
        }

        let mut response = self.generate(spec.index, 0, &bundle)?;
        if let Some(query) = search_directive(&response).map(str::to_string) {
            let notice = if !agent.role.search_allowed {
                let v = Violation::hard(
                    ViolationKind::ToolPermission,
                    spec.index,
                    format!("{} requested a web search but may not search", spec.speaker),
                );
                step_violations.push(v);
                self.journal.record(
                    clock,
                    Event::Search {
                        role: spec.speaker,
                        step: spec.index,
                        query,
                        outcome: SearchOutcomeTag::Denied,
                        items: 0,
                    },
                );
                "[Search unavailable]\nYour role may not use web search. Answer from company_data and the debate context.".to_string()
            } else {
                match self.search(&agent.role, spec.index, &query, &mut budget) {
                    Some(items) => {
                        web.extend(items);
                        render_web_results(&web)
                    }
                    None => "[Search unavailable]\nNo further searches are available for this step. Answer from company_data.".to_string(),
                }
            };
            bundle.supplement = Some(notice);
            response = self.generate(spec.index, 1, &bundle)?;
        }
        let text = strip_directives(&response);

        let structure = extract_structure(&text);
        let sources = StepSources {
            context_factors,
            web_sources: web
                .iter()
                .flat_map(|i| std::iter::once(i.source.clone()).chain(i.url.clone()))
                .collect(),
        };
        step_violations.extend(validate_step(
            spec.speaker,
            spec.index,
            &structure,
            spec,
            &mut self.ledger,
            &sources,
        ));
        for v in &step_violations {
            self.note(v.clone());
        }
        let elapsed = watch.elapsed_seconds();
        self.journal.record_timed(clock, Event::StepCompleted { step: spec.index }, Some(elapsed));

        let hard: Vec<Violation> = step_violations.iter().filter(|v| v.is_hard()).cloned().collect();
        self.transcript.steps.push(Utterance {
            index: spec.index,
            speaker: spec.speaker,
            kind: spec.kind,
            context: spec.context.to_vec(),
            text,
            citations: structure.citations,
            factors: structure.factors,
            question_count: structure.question_count,
            falsifiability_notes: structure.falsifiability_notes,
            violations: step_violations,
            web_evidence: web,
            elapsed_seconds: elapsed,
        });
        self.next += 1;

        if self.params.strictness == Strictness::Strict && !hard.is_empty() {
            let reason = format!("hard violation at step {}", spec.index);
            self.journal.record(clock, Event::RunAborted { reason });
            return Err(DebateError::HardViolation {
                step: spec.index,
                violations: hard,
                partial: self.partial(),
            });
        }
        Ok(self.transcript.steps.last().expect("just pushed"))
    }

    fn pool_is_sparse(&self) -> bool {
        let items = self.env.pool.retrieve(&self.params.company, &self.params.policy).items;
        let tagged: BTreeSet<_> = items
            .iter()
            .filter(|i| self.params.policy.in_window(i.date))
            .filter_map(|i| i.factor_tag)
            .collect();
        tagged.len() < 3
    }

    /// One search with up to two retries on provider failure. `None` when
    /// nothing could be fetched.
    fn search(
        &mut self,
        role: &crate::runtime::AgentRole,
        step: u8,
        query: &str,
        budget: &mut SearchBudget,
    ) -> Option<Vec<EvidenceItem>> {
        let clock = self.env.clock;
        let mut last_err = None;
        for _ in 0..3 {
            match web_search(role, &self.params.company, query, &self.params.policy, budget, self.env.search, clock) {
                Ok(SearchOutcome::Items(items)) => {
                    self.journal.record(
                        clock,
                        Event::Search {
                            role: role.id,
                            step,
                            query: query.to_string(),
                            outcome: SearchOutcomeTag::Ok,
                            items: items.len(),
                        },
                    );
                    return Some(items);
                }
                Ok(SearchOutcome::BudgetExhausted) => {
                    let outcome = if last_err.is_some() { SearchOutcomeTag::Failed } else { SearchOutcomeTag::BudgetExhausted };
                    self.journal.record(
                        clock,
                        Event::Search { role: role.id, step, query: query.to_string(), outcome, items: 0 },
                    );
                    return None;
                }
                Err(e @ SearchError::Provider(_)) => last_err = Some(e),
                Err(SearchError::PermissionDenied(_)) => return None,
            }
        }
        self.journal.record(
            clock,
            Event::Search { role: role.id, step, query: query.to_string(), outcome: SearchOutcomeTag::Failed, items: 0 },
        );
        None
    }

    fn generate(&mut self, step: u8, attempt: u8, bundle: &PromptBundle) -> Result<String, DebateError> {
        let request = GenerationRequest {
            role: bundle.role,
            step,
            attempt,
            model_id: &self.params.model_id,
            bundle,
        };
        match self.env.backend.generate(&request) {
            Ok(text) => {
                self.journal.record(
                    self.env.clock,
                    Event::Generation {
                        role: bundle.role,
                        step,
                        attempt,
                        prompt_digest: bundle.digest(),
                        response: text.clone(),
                    },
                );
                Ok(text)
            }
            Err(source) => {
                self.journal.record(
                    self.env.clock,
                    Event::RunAborted { reason: format!("backend failed at step {step}: {source}") },
                );
                Err(DebateError::Backend { step, source, partial: self.partial() })
            }
        }
    }

    /// Completes the session. Fails unless all ten steps ran.
    pub fn finish(self) -> Result<Transcript, DebateError> {
        if self.next <= 10 {
            return Err(DebateError::Incomplete(self.next - 1));
        }
        let mut t = self.transcript;
        t.session.elapsed_seconds = self.stopwatch.elapsed_seconds();
        t.set_closings();
        self.journal.record_timed(
            self.env.clock,
            Event::StageCompleted { stage: "debate".into() },
            Some(t.session.elapsed_seconds),
        );
        Ok(t)
    }
}

/// Runs all ten steps in order.
pub fn run_debate(env: Env<'_>, params: DebateParams, journal: &mut Journal) -> Result<Transcript, DebateError> {
    let mut session = DebateSession::start(env, params, journal)?;
    while let Some(step) = session.next_step() {
        session.execute_step(step)?;
    }
    session.finish()
}
