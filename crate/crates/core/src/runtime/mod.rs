//! Agent roles, prompt templates, generation backends, web search gating and
//! the per-session run journal.

mod backend;
mod journal;
mod prompt;
mod remote;
mod roles;
mod search;

pub use backend::{Backend, BackendError, BackendMode, GenerationRequest, ScriptedBackend, ScriptedTurn, ScriptedTranscript};
pub use journal::{Event, Journal, JournalLine, SearchOutcomeTag, Timing};
pub use prompt::{ChatMessage, ContextEntry, Locale, PromptBundle, PromptTemplates, TemplateError, TemplateVars};
pub use remote::{RemoteBackend, RemoteConfig};
pub use roles::{instantiate_agents, Agent, AgentRole, AgentSet, RoleId, Team};
pub use search::{
    web_search, HttpSearchProvider, NoSearch, SearchBudget, SearchError, SearchHit, SearchOutcome,
    SearchProvider, SearchRequest, StaticSearch,
};
