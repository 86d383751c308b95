//! Prompt templates and rendering.
//!
//! Templates are plain text with `{placeholder}` substitution:
//!
//! | placeholder            | replaced by                                       |
//! |------------------------|---------------------------------------------------|
//! | `{problem}`            | city count and coordinates                        |
//! | `{operators}`          | the crossover and mutation catalog                |
//! | `{population}`         | one `id: route; length` line per pool member      |
//! | `{offspring_needed}`   | number of pairs requested                         |
//! | `{first_offspring_id}` | id given to the offspring of the first pair       |
//!
//! The system template is picked by [`ExecutionMode`]; the user template is
//! shared.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::operators::OperatorCatalog;
use crate::tsp::{Individual, TspInstance};

pub const DEFAULT_CHAR_BUDGET: usize = 16_000;

const SYSTEM_LLM_EXECUTES: &str = include_str!("../../templates/system_llm_executes.txt");
const SYSTEM_ENGINE_EXECUTES: &str = include_str!("../../templates/system_engine_executes.txt");
const USER: &str = include_str!("../../templates/user.txt");

/// Who applies crossover and mutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    /// The model returns finished offspring routes.
    LlmExecutes,
    /// The model returns pairs and operator names; the engine applies them.
    EngineExecutes,
}

impl std::str::FromStr for ExecutionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "llm_executes" => Ok(Self::LlmExecutes),
            "engine_executes" => Ok(Self::EngineExecutes),
            other => Err(format!("unknown mode `{other}` (expected llm_executes or engine_executes)")),
        }
    }
}

impl std::fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::LlmExecutes => "llm_executes",
            Self::EngineExecutes => "engine_executes",
        })
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt is {size} characters, over the budget of {budget}; use a smaller population")]
    OverBudget { size: usize, budget: usize },
    #[error("cannot build a prompt for an empty pool")]
    EmptyPool,
    #[error("cannot read template {path}: {source}")]
    Template {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub system_llm_executes: String,
    pub system_engine_executes: String,
    pub user: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            system_llm_executes: SYSTEM_LLM_EXECUTES.to_string(),
            system_engine_executes: SYSTEM_ENGINE_EXECUTES.to_string(),
            user: USER.to_string(),
        }
    }
}

impl PromptTemplates {
    /// Loads `system_llm_executes.txt`, `system_engine_executes.txt` and
    /// `user.txt` from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path)
                .map_err(|source| PromptError::Template { path: path.display().to_string(), source })
        };
        Ok(Self {
            system_llm_executes: read("system_llm_executes.txt")?,
            system_engine_executes: read("system_engine_executes.txt")?,
            user: read("user.txt")?,
        })
    }

    /// SHA-256 over the three templates, hex encoded.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for part in [&self.system_llm_executes, &self.system_engine_executes, &self.user] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
        hex::encode(hasher.finalize())
    }

    fn system(&self, mode: ExecutionMode) -> &str {
        match mode {
            ExecutionMode::LlmExecutes => &self.system_llm_executes,
            ExecutionMode::EngineExecutes => &self.system_engine_executes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
}

impl PromptBundle {
    pub fn len(&self) -> usize {
        self.system_text.chars().count() + self.user_text.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.system_text.is_empty() && self.user_text.is_empty()
    }

    /// Same prompt with a corrective note appended to the user message.
    pub fn with_correction(&self, note: &str) -> Self {
        Self { system_text: self.system_text.clone(), user_text: format!("{}\n{note}\n", self.user_text.trim_end()) }
    }
}

/// What the model is shown for one call.
#[derive(Debug, Clone)]
pub struct PromptInput<'a> {
    pub instance: &'a TspInstance,
    /// Pool members with their selection ids, in listing order.
    pub members: Vec<(usize, &'a Individual)>,
    pub offspring_needed: usize,
    pub first_offspring_id: usize,
}

impl<'a> PromptInput<'a> {
    /// Lists a whole population with ids `0..pool.len()`.
    pub fn for_pool(instance: &'a TspInstance, pool: &'a [Individual], offspring_needed: usize) -> Self {
        Self { instance, members: pool.iter().enumerate().collect(), offspring_needed, first_offspring_id: pool.len() }
    }
}

fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in values {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

fn describe_problem(instance: &TspInstance) -> String {
    let mut out =
        format!("There are {} cities, numbered 0 to {}, with these coordinates:\n", instance.len(), instance.len() - 1);
    for (i, p) in instance.nodes().iter().enumerate() {
        let _ = writeln!(out, "{i}: ({:.2}, {:.2})", p.x, p.y);
    }
    out.trim_end().to_string()
}

fn describe_operators(catalog: &OperatorCatalog) -> String {
    let crossovers: Vec<&str> = catalog.crossovers.iter().map(|c| c.name()).collect();
    let mutations: Vec<&str> = catalog.mutations.iter().map(|m| m.name()).collect();
    format!("  crossover: {}\n  mutation: {}", crossovers.join(", "), mutations.join(", "))
}

fn describe_population(members: &[(usize, &Individual)]) -> String {
    let mut out = String::new();
    for (id, ind) in members {
        let route: Vec<String> = ind.tour().iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{id}: {}; length {:.4}", route.join(","), ind.length());
    }
    out.trim_end().to_string()
}

/// Renders the system and user messages for one model call.
pub fn build_prompt(
    input: &PromptInput<'_>,
    catalog: &OperatorCatalog,
    mode: ExecutionMode,
    templates: &PromptTemplates,
    budget: usize,
) -> Result<PromptBundle, PromptError> {
    if input.members.is_empty() {
        return Err(PromptError::EmptyPool);
    }
    let problem = describe_problem(input.instance);
    let operators = describe_operators(catalog);
    let population = describe_population(&input.members);
    let needed = input.offspring_needed.to_string();
    let first_child = input.first_offspring_id.to_string();
    let values = [
        ("problem", problem.as_str()),
        ("operators", operators.as_str()),
        ("population", population.as_str()),
        ("offspring_needed", needed.as_str()),
        ("first_offspring_id", first_child.as_str()),
    ];
    let bundle = PromptBundle {
        system_text: render(templates.system(mode), &values),
        user_text: render(&templates.user, &values),
    };
    let size = bundle.len();
    if size > budget {
        return Err(PromptError::OverBudget { size, budget });
    }
    Ok(bundle)
}
