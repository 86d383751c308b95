use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EngineConfig, RunMeta, StrategyKind};
use crate::metrics::CellKey;
use crate::tsp::{Family, Individual, TspInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_length: f64,
    pub mean_length: f64,
    pub variance: f64,
    /// Temperature used to breed this generation.
    pub temperature: f64,
    pub stagnation: u64,
    pub fallback: bool,
    pub repairs: usize,
    pub requeries: usize,
    /// Tour lengths of the population in stored order.
    pub lengths: Vec<f64>,
}

/// A generation whose pairing came from the mock selector after the model failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackEvent {
    pub generation: usize,
    pub error: String,
    pub last_raw: String,
}

/// Everything written about one run.
///
/// Wall-clock duration is kept in memory only, so two runs with equal inputs
/// serialize to identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub instance_id: String,
    pub family: Family,
    pub node_count: usize,
    pub optimal_length: Option<f64>,
    pub strategy: StrategyKind,
    pub model_label: String,
    pub config: EngineConfig,
    pub prompt_checksum: Option<String>,
    #[serde(skip)]
    pub generations: Vec<GenerationRecord>,
    pub best: Individual,
    pub success_step: Option<usize>,
    pub fallback_events: Vec<FallbackEvent>,
    pub completed: bool,
    pub error: Option<String>,
    #[serde(skip)]
    pub duration: Duration,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Generation(GenerationRecord),
    Summary(Box<RunRecord>),
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("record has no summary line")]
    MissingSummary,
    #[error("line {line}: content after the summary line")]
    TrailingLine { line: usize },
}

impl RunRecord {
    pub(crate) fn start(instance: &TspInstance, config: &EngineConfig, meta: &RunMeta, best: Individual) -> Self {
        Self {
            run_id: meta.run_id.clone(),
            instance_id: instance.id().to_string(),
            family: instance.family(),
            node_count: instance.len(),
            optimal_length: instance.optimal_length(),
            strategy: config.strategy,
            model_label: meta.model_label.clone(),
            config: config.clone(),
            prompt_checksum: meta.prompt_checksum.clone(),
            generations: Vec::new(),
            best,
            success_step: None,
            fallback_events: Vec::new(),
            completed: false,
            error: None,
            duration: Duration::ZERO,
        }
    }

    pub(crate) fn push(&mut self, generation: GenerationRecord, best: &Individual) {
        if best.length() < self.best.length() || self.generations.is_empty() {
            self.best = best.clone();
        }
        self.generations.push(generation);
    }

    pub fn cell_key(&self) -> CellKey {
        CellKey { family: self.family, n: self.node_count, strategy: self.strategy, model: self.model_label.clone() }
    }

    /// One line per generation followed by a summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for g in &self.generations {
            out.push_str(&serde_json::to_string(&Line::Generation(g.clone())).expect("records serialize"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&Line::Summary(Box::new(self.clone()))).expect("records serialize"));
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, RecordError> {
        let mut generations = Vec::new();
        let mut summary: Option<RunRecord> = None;
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            if summary.is_some() {
                return Err(RecordError::TrailingLine { line: i + 1 });
            }
            match serde_json::from_str(raw).map_err(|source| RecordError::Json { line: i + 1, source })? {
                Line::Generation(g) => generations.push(g),
                Line::Summary(s) => summary = Some(*s),
            }
        }
        let mut record = summary.ok_or(RecordError::MissingSummary)?;
        record.generations = generations;
        Ok(record)
    }
}
