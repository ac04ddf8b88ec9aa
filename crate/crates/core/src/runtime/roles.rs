use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::prompt::{PromptTemplates, TemplateError, TemplateVars};
use crate::guideline::Side;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RoleId {
    A1,
    A2,
    A3,
    N1,
    N2,
    N3,
    #[serde(rename = "aggregator")]
    Aggregator,
    #[serde(rename = "nas_analyst")]
    NasAnalyst,
}

impl RoleId {
    pub const DEBATERS: [RoleId; 6] = [Self::A1, Self::A2, Self::A3, Self::N1, Self::N2, Self::N3];
    pub const ALL: [RoleId; 8] = [
        Self::A1,
        Self::A2,
        Self::A3,
        Self::N1,
        Self::N2,
        Self::N3,
        Self::Aggregator,
        Self::NasAnalyst,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::A1 => "A1",
            Self::A2 => "A2",
            Self::A3 => "A3",
            Self::N1 => "N1",
            Self::N2 => "N2",
            Self::N3 => "N3",
            Self::Aggregator => "aggregator",
            Self::NasAnalyst => "nas_analyst",
        }
    }

    pub fn team(self) -> Team {
        match self {
            Self::A1 | Self::A2 | Self::A3 => Team::Affirmative,
            Self::N1 | Self::N2 | Self::N3 => Team::Negative,
            Self::Aggregator | Self::NasAnalyst => Team::Neutral,
        }
    }

    /// Tool policy: only the retrieval-enabled debaters may search.
    pub fn search_allowed(self) -> bool {
        matches!(self, Self::A1 | Self::A2 | Self::N1 | Self::N2)
    }
}

impl fmt::Display for RoleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoleId::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown role `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Team {
    Affirmative,
    Negative,
    Neutral,
}

impl Team {
    pub fn side(self) -> Option<Side> {
        match self {
            Team::Affirmative => Some(Side::Affirmative),
            Team::Negative => Some(Side::Negative),
            Team::Neutral => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AgentRole {
    pub id: RoleId,
    pub team: Team,
    pub search_allowed: bool,
}

impl From<RoleId> for AgentRole {
    fn from(id: RoleId) -> Self {
        Self {
            id,
            team: id.team(),
            search_allowed: id.search_allowed(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub role: AgentRole,
    pub system: String,
}

/// The six debaters plus the aggregator and the single-pass analyst.
#[derive(Debug, Clone)]
pub struct AgentSet {
    agents: BTreeMap<RoleId, Agent>,
}

impl AgentSet {
    pub fn get(&self, id: RoleId) -> &Agent {
        &self.agents[&id]
    }

    pub fn debaters(&self) -> impl Iterator<Item = &Agent> {
        RoleId::DEBATERS.iter().map(|id| &self.agents[id])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Agent> {
        self.agents.values()
    }
}

/// Renders every role prompt. Fails on the first role without a template.
pub fn instantiate_agents(
    templates: &PromptTemplates,
    vars: &TemplateVars,
) -> Result<AgentSet, TemplateError> {
    let mut agents = BTreeMap::new();
    for id in RoleId::ALL {
        let system = templates.role_system(id, vars)?;
        agents.insert(
            id,
            Agent {
                role: id.into(),
                system,
            },
        );
    }
    Ok(AgentSet { agents })
}
