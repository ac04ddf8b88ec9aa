use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::PromptBundle;
use super::roles::RoleId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Scripted,
    Remote,
}

/// One generation call. `step` is the debate step (1..=10), 11 for the
/// aggregator, and 1 for the single-pass analyst. `attempt` is 0 for the
/// first call of a step and 1 for the follow-up after a search round-trip.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub role: RoleId,
    pub step: u8,
    pub attempt: u8,
    pub model_id: &'a str,
    pub bundle: &'a PromptBundle,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Http {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("unexpected response: {0}")]
    Protocol(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            Self::Transport { .. } => true,
            Self::Http { status, .. } => *status == 429 || *status >= 500,
            Self::Config(_) | Self::Protocol(_) => false,
        }
    }
}

pub trait Backend: Send + Sync {
    fn mode(&self) -> BackendMode;
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError>;
}

/// A canned response for one (role, step). When `search` is set the first
/// call of the step returns a search directive and the follow-up call
/// returns `text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedTurn {
    pub role: RoleId,
    pub step: u8,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedTranscript {
    pub turns: Vec<ScriptedTurn>,
}

impl ScriptedTranscript {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("reading script {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Config(format!("parsing script {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    turns: BTreeMap<(RoleId, u8), ScriptedTurn>,
}

impl ScriptedBackend {
    pub fn new(script: ScriptedTranscript) -> Result<Self, BackendError> {
        let mut turns = BTreeMap::new();
        for turn in script.turns {
            let key = (turn.role, turn.step);
            if turns.insert(key, turn).is_some() {
                return Err(BackendError::Config(format!(
                    "script has two turns for ({}, step {})",
                    key.0, key.1
                )));
            }
        }
        Ok(Self { turns })
    }

    /// Checks that every (role, step) in `schedule` has a canned response.
    pub fn require(&self, schedule: &[(RoleId, u8)]) -> Result<(), BackendError> {
        match schedule.iter().find(|k| !self.turns.contains_key(k)) {
            Some((role, step)) => Err(gap(*role, *step)),
            None => Ok(()),
        }
    }

    pub fn has(&self, role: RoleId, step: u8) -> bool {
        self.turns.contains_key(&(role, step))
    }
}

fn gap(role: RoleId, step: u8) -> BackendError {
    BackendError::Config(format!("scripted transcript has no turn for ({role}, step {step})"))
}

impl Backend for ScriptedBackend {
    fn mode(&self) -> BackendMode {
        BackendMode::Scripted
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        let turn = self
            .turns
            .get(&(request.role, request.step))
            .ok_or_else(|| gap(request.role, request.step))?;
        match (&turn.search, request.attempt) {
            (Some(query), 0) => Ok(format!("SEARCH: {query}")),
            _ => Ok(turn.text.clone()),
        }
    }
}
