use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::roles::RoleId;
use crate::guideline::render_factor_table;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("no prompt template for role {role} (expected {path})")]
    MissingRole { role: RoleId, path: PathBuf },
    #[error("missing prompt template {path}")]
    Missing { path: PathBuf },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Output-language tag injected into every template as `{language}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Locale(pub String);

impl Locale {
    pub fn language_name(&self) -> &str {
        match self.0.as_str() {
            "ko" | "ko-KR" => "Korean",
            "en" | "en-US" | "en-GB" => "English",
            "ja" => "Japanese",
            other => other,
        }
    }
}

impl Default for Locale {
    fn default() -> Self {
        Locale("ko".to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateVars {
    vars: BTreeMap<String, String>,
}

impl Default for TemplateVars {
    fn default() -> Self {
        let mut vars = BTreeMap::new();
        vars.insert("company_name".into(), "the company".into());
        vars.insert("language".into(), Locale::default().language_name().into());
        vars.insert("factor_table".into(), render_factor_table());
        vars.insert("recency_days".into(), "90".into());
        vars.insert("as_of".into(), "the analysis date".into());
        Self { vars }
    }
}

impl TemplateVars {
    pub fn with_locale(mut self, locale: &Locale) -> Self {
        self.set("language", locale.language_name());
        self
    }

    pub fn with_company(mut self, name: &str) -> Self {
        self.set("company_name", name);
        self
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.vars.insert(key.to_string(), value.into());
    }

    /// Substitutes `{key}` for every known key; unknown braces pass through.
    pub fn render(&self, template: &str) -> String {
        let mut out = template.to_string();
        for (k, v) in &self.vars {
            out = out.replace(&format!("{{{k}}}"), v);
        }
        out
    }
}

const STEP_FILES: [&str; 10] = [
    "tasks/step01.txt",
    "tasks/step02.txt",
    "tasks/step03.txt",
    "tasks/step04.txt",
    "tasks/step05.txt",
    "tasks/step06.txt",
    "tasks/step07.txt",
    "tasks/step08.txt",
    "tasks/step09.txt",
    "tasks/step10.txt",
];

/// Raw template texts. Roles embed `{guideline}` and `{debate_rules}`.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    guideline: String,
    debate_rules: String,
    roles: BTreeMap<RoleId, String>,
    steps: Vec<String>,
    aggregate: String,
    nas_analysis: String,
}

macro_rules! builtin {
    ($path:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/prompts/", $path))
    };
}

fn role_file(role: RoleId) -> String {
    format!("roles/{}.txt", role.as_str())
}

impl PromptTemplates {
    /// The templates shipped in `prompts/`, compiled in.
    pub fn builtin() -> Self {
        let roles = [
            (RoleId::A1, builtin!("roles/A1.txt")),
            (RoleId::A2, builtin!("roles/A2.txt")),
            (RoleId::A3, builtin!("roles/A3.txt")),
            (RoleId::N1, builtin!("roles/N1.txt")),
            (RoleId::N2, builtin!("roles/N2.txt")),
            (RoleId::N3, builtin!("roles/N3.txt")),
            (RoleId::Aggregator, builtin!("roles/aggregator.txt")),
            (RoleId::NasAnalyst, builtin!("roles/nas_analyst.txt")),
        ];
        Self {
            guideline: builtin!("guideline.txt").to_string(),
            debate_rules: builtin!("debate_rules.txt").to_string(),
            roles: roles.into_iter().map(|(r, t)| (r, t.to_string())).collect(),
            steps: vec![
                builtin!("tasks/step01.txt").to_string(),
                builtin!("tasks/step02.txt").to_string(),
                builtin!("tasks/step03.txt").to_string(),
                builtin!("tasks/step04.txt").to_string(),
                builtin!("tasks/step05.txt").to_string(),
                builtin!("tasks/step06.txt").to_string(),
                builtin!("tasks/step07.txt").to_string(),
                builtin!("tasks/step08.txt").to_string(),
                builtin!("tasks/step09.txt").to_string(),
                builtin!("tasks/step10.txt").to_string(),
            ],
            aggregate: builtin!("tasks/aggregate.txt").to_string(),
            nas_analysis: builtin!("nas_analysis.txt").to_string(),
        }
    }

    /// Loads an edited copy of the template tree from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let read = |rel: &str| -> Result<String, TemplateError> {
            let path = dir.join(rel);
            if !path.is_file() {
                return Err(TemplateError::Missing { path });
            }
            fs::read_to_string(&path).map_err(|source| TemplateError::Io { path, source })
        };
        let mut roles = BTreeMap::new();
        for role in RoleId::ALL {
            let path = dir.join(role_file(role));
            if !path.is_file() {
                return Err(TemplateError::MissingRole { role, path });
            }
            let text = fs::read_to_string(&path).map_err(|source| TemplateError::Io { path, source })?;
            roles.insert(role, text);
        }
        Ok(Self {
            guideline: read("guideline.txt")?,
            debate_rules: read("debate_rules.txt")?,
            roles,
            steps: STEP_FILES.iter().map(|f| read(f)).collect::<Result<_, _>>()?,
            aggregate: read("tasks/aggregate.txt")?,
            nas_analysis: read("nas_analysis.txt")?,
        })
    }

    fn expand(&self, template: &str, vars: &TemplateVars) -> String {
        let composed = template
            .replace("{debate_rules}", &self.debate_rules)
            .replace("{guideline}", &self.guideline);
        vars.render(&composed)
    }

    pub fn guideline_text(&self, vars: &TemplateVars) -> String {
        vars.render(&self.guideline)
    }

    pub fn role_system(&self, role: RoleId, vars: &TemplateVars) -> Result<String, TemplateError> {
        let t = self.roles.get(&role).ok_or_else(|| TemplateError::MissingRole {
            role,
            path: PathBuf::from(role_file(role)),
        })?;
        Ok(self.expand(t, vars))
    }

    /// Task text for debate step `index` (1-based).
    pub fn step_task(&self, index: u8, vars: &TemplateVars) -> String {
        self.expand(&self.steps[index as usize - 1], vars)
    }

    pub fn aggregate_task(&self, vars: &TemplateVars) -> String {
        self.expand(&self.aggregate, vars)
    }

    pub fn nas_task(&self, vars: &TemplateVars) -> String {
        self.expand(&self.nas_analysis, vars)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// One prior utterance injected into a step's prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContextEntry {
    pub step: u8,
    pub speaker: RoleId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptBundle {
    pub role: RoleId,
    pub system: String,
    pub task: String,
    pub context: Vec<ContextEntry>,
    /// Appended after a search round-trip: results or a refusal notice.
    pub supplement: Option<String>,
    pub locale: Locale,
}

impl PromptBundle {
    pub fn new(role: RoleId, system: String, task: String, locale: Locale) -> Self {
        Self {
            role,
            system,
            task,
            context: Vec::new(),
            supplement: None,
            locale,
        }
    }

    pub fn user_text(&self) -> String {
        let mut user = self.task.clone();
        if !self.context.is_empty() {
            user.push_str("\n\n[Debate context]\n");
            for entry in &self.context {
                user.push_str(&format!(
                    "\n[Step {} - {}]\n{}\n",
                    entry.step, entry.speaker, entry.text
                ));
            }
        }
        if let Some(extra) = &self.supplement {
            user.push_str("\n\n");
            user.push_str(extra);
        }
        user
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        vec![
            ChatMessage {
                role: "system".into(),
                content: self.system.clone(),
            },
            ChatMessage {
                role: "user".into(),
                content: self.user_text(),
            },
        ]
    }

    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for m in self.messages() {
            hasher.update(m.role.as_bytes());
            hasher.update([0]);
            hasher.update(m.content.as_bytes());
            hasher.update([0]);
        }
        hex::encode(hasher.finalize())
    }

    /// Everything the model will see, for inspection and tests.
    pub fn full_text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user_text())
    }
}
