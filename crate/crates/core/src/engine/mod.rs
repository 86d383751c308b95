//! The generational loop.
//!
//! Generation 0 is the random initial population. Every later generation
//! pairs the current population, produces one child per pair, merges the
//! children with their parents and keeps the `N` shortest tours (parents win
//! ties). A run holds at most `max_generations` generations, counting
//! generation 0.

mod record;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use record::{FallbackEvent, GenerationRecord, RecordError, RunRecord};

use crate::llm::{ExecutionMode, TemperatureState};
use crate::metrics::{population_variance, OPTIMALITY_TOLERANCE};
use crate::operators::{crossover, mutate, Cut};
use crate::selection::{
    select_pair_mock, MockPairSelector, MockWeights, PairingPlan, RandomSelector, SelectionError, SelectionRequest,
    Selector,
};
use crate::tsp::{Individual, TspInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    PairLlm,
    PairMock,
    RandomLmea,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [StrategyKind::PairLlm, StrategyKind::PairMock, StrategyKind::RandomLmea];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::PairLlm => "pair_llm",
            StrategyKind::PairMock => "pair_mock",
            StrategyKind::RandomLmea => "random_lmea",
        }
    }

    /// Whether the strategy forbids reusing an original pool member.
    pub fn is_monogamous(self) -> bool {
        !matches!(self, StrategyKind::RandomLmea)
    }

    pub fn needs_model(self) -> bool {
        matches!(self, StrategyKind::PairLlm)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown strategy `{s}` (expected pair_llm, pair_mock or random_lmea)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub strategy: StrategyKind,
    pub mode: ExecutionMode,
    pub seed: u64,
    pub early_stop_on_optimal: bool,
    /// Children per generation; `None` means one per population member.
    pub offspring_per_generation: Option<usize>,
    pub base_temperature: f64,
    /// Replace a failed model selection with the mock selector for that generation.
    pub fallback_to_mock: bool,
    pub mock_weights: MockWeights,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            population_size: 16,
            max_generations: 250,
            strategy: StrategyKind::PairMock,
            mode: ExecutionMode::EngineExecutes,
            seed: 0,
            early_stop_on_optimal: true,
            offspring_per_generation: None,
            base_temperature: 1.0,
            fallback_to_mock: true,
            mock_weights: MockWeights::default(),
        }
    }
}

impl EngineConfig {
    pub fn offspring_needed(&self) -> usize {
        self.offspring_per_generation.unwrap_or(self.population_size)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.population_size < 2 {
            return Err(format!("population size must be at least 2, got {}", self.population_size));
        }
        if self.max_generations < 1 {
            return Err("max_generations must be at least 1".into());
        }
        if self.offspring_needed() < 1 {
            return Err("offspring per generation must be at least 1".into());
        }
        // k monogamous pairs from P members need P >= 3 once k >= 2
        if self.strategy.is_monogamous() && self.population_size < 3 && self.offspring_needed() > 1 {
            return Err(format!(
                "{} cannot form {} pairs from {} individuals without reusing a parent",
                self.strategy,
                self.offspring_needed(),
                self.population_size
            ));
        }
        if !(self.base_temperature.is_finite() && self.base_temperature >= 0.0) {
            return Err(format!("base temperature must be nonnegative, got {}", self.base_temperature));
        }
        Ok(())
    }
}

/// Selector for the strategies that need no model.
pub fn offline_selector(strategy: StrategyKind, weights: MockWeights) -> Option<Box<dyn Selector>> {
    match strategy {
        StrategyKind::PairMock => Some(Box::new(MockPairSelector { weights })),
        StrategyKind::RandomLmea => Some(Box::new(RandomSelector::default())),
        StrategyKind::PairLlm => None,
    }
}

/// Engine seed for one instance of an experiment.
///
/// Depends on the master seed and the instance id only, so every strategy
/// run on an instance starts from the same population.
pub fn derive_seed(master_seed: u64, instance_id: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(instance_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// `n` independent uniformly random tours drawn from `seed`.
pub fn init_population(instance: &TspInstance, size: usize, seed: u64) -> Vec<Individual> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|_| {
            let mut tour: Vec<usize> = (0..instance.len()).collect();
            tour.shuffle(&mut rng);
            Individual::new(instance, tour).expect("a shuffled range is a permutation")
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("selection failed: {0}")]
    Selection(#[from] SelectionError),
    #[error("offspring construction failed: {0}")]
    Offspring(#[from] crate::Error),
    #[error("plan violates pairing rules: {0}")]
    Plan(#[from] crate::selection::PlanViolation),
}

/// Mutable state of one run between generations.
#[derive(Debug, Clone)]
pub struct EngineState {
    pub population: Vec<Individual>,
    pub generation: usize,
    pub temperature: TemperatureState,
    rng: ChaCha8Rng,
}

impl EngineState {
    pub fn new(instance: &TspInstance, config: &EngineConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        // stream 0 of this seed is used by `init_population`
        rng.set_stream(1);
        Self {
            population: init_population(instance, config.population_size, config.seed),
            generation: 0,
            temperature: TemperatureState::new(config.base_temperature),
            rng,
        }
    }

    pub fn from_population(population: Vec<Individual>, config: &EngineConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Self { population, generation: 0, temperature: TemperatureState::new(config.base_temperature), rng }
    }

    pub fn best_length(&self) -> f64 {
        self.population.iter().map(Individual::length).fold(f64::INFINITY, f64::min)
    }

    pub fn best(&self) -> &Individual {
        self.population.iter().min_by(|a, b| a.length().total_cmp(&b.length())).expect("population is never empty")
    }

    fn snapshot(&self, temperature: f64) -> GenerationRecord {
        let lengths: Vec<f64> = self.population.iter().map(Individual::length).collect();
        GenerationRecord {
            generation: self.generation,
            best_length: self.best_length(),
            mean_length: lengths.iter().sum::<f64>() / lengths.len() as f64,
            variance: population_variance(&lengths).expect("population is never empty"),
            temperature,
            stagnation: self.temperature.stagnation,
            fallback: false,
            repairs: 0,
            requeries: 0,
            lengths,
        }
    }
}

/// Draws a cut `lo < hi <= n`.
fn draw_cut(rng: &mut ChaCha8Rng, n: usize) -> Cut {
    let a = rng.random_range(0..=n);
    let mut b = rng.random_range(0..n);
    if b >= a {
        b += 1;
    }
    Cut::new(a.min(b), a.max(b))
}

/// Builds one child per pair, resolving offspring ids to earlier children.
fn breed(
    instance: &TspInstance,
    population: &[Individual],
    plan: &PairingPlan,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Individual>, StepError> {
    let n = instance.len();
    let p = population.len();
    let mut children: Vec<Individual> = Vec::with_capacity(plan.pairs.len());
    for pair in &plan.pairs {
        let child = match &pair.child {
            Some(route) => Individual::new(instance, route.clone())?,
            None => {
                let get = |id: usize| if id < p { &population[id] } else { &children[id - p] };
                let cut = draw_cut(rng, n);
                let loci = (rng.random_range(0..n), rng.random_range(0..n));
                let crossed = crossover(pair.crossover, get(pair.first), get(pair.second), cut, instance)?;
                mutate(&crossed, pair.mutation, loci, instance)?
            }
        };
        children.push(child);
    }
    Ok(children)
}

/// Outcome of a single generation.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub record: GenerationRecord,
    pub improved: bool,
    pub fallback: Option<FallbackEvent>,
}

/// Advances `state` by one generation.
pub fn step_generation(
    state: &mut EngineState,
    instance: &TspInstance,
    config: &EngineConfig,
    selector: &mut dyn Selector,
) -> Result<StepOutcome, StepError> {
    let temperature = state.temperature.current();
    let seed = state.rng.next_u64();
    let req = SelectionRequest {
        pool: &state.population,
        offspring_needed: config.offspring_needed(),
        instance,
        seed,
        temperature,
    };
    let generation = state.generation + 1;
    let (plan, fallback) = match selector.select(&req) {
        Ok(plan) => (plan, None),
        Err(err @ (SelectionError::Exhausted { .. } | SelectionError::Transport(_))) if config.fallback_to_mock => {
            log::warn!("generation {generation}: selection failed ({err}); using the mock selector");
            let last_raw = match &err {
                SelectionError::Exhausted { last_raw, .. } => last_raw.clone(),
                _ => String::new(),
            };
            let plan = select_pair_mock(&req, config.mock_weights)?;
            (plan, Some(FallbackEvent { generation, error: err.to_string(), last_raw }))
        }
        Err(err) => return Err(err.into()),
    };
    plan.check(
        state.population.len(),
        config.offspring_needed(),
        config.strategy.is_monogamous() || fallback.is_some(),
    )?;

    let children = breed(instance, &state.population, &plan, &mut state.rng)?;
    let previous_best = state.best_length();
    let mut merged = std::mem::take(&mut state.population);
    merged.extend(children);
    // stable: parents stay ahead of equally long children
    merged.sort_by(|a, b| a.length().total_cmp(&b.length()));
    merged.truncate(config.population_size);
    state.population = merged;

    let improved = state.best_length() < previous_best;
    state.temperature = state.temperature.advance(improved);
    state.generation = generation;

    let mut record = state.snapshot(temperature);
    record.fallback = fallback.is_some();
    record.repairs = plan.repairs;
    record.requeries = plan.requeries;
    Ok(StepOutcome { record, improved, fallback })
}

/// Labels attached to a run's record.
#[derive(Debug, Clone, Default)]
pub struct RunMeta {
    pub run_id: String,
    pub model_label: String,
    pub prompt_checksum: Option<String>,
}

#[derive(Debug, Error)]
#[error("run {} stopped at generation {}: {source}", partial.run_id, partial.generations.len())]
pub struct RunError {
    #[source]
    pub source: RunFailure,
    /// Everything recorded before the failure.
    pub partial: Box<RunRecord>,
}

#[derive(Debug, Error)]
pub enum RunFailure {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Step(#[from] StepError),
}

fn reached_optimum(best: f64, optimal: Option<f64>) -> bool {
    optimal.is_some_and(|opt| best <= opt + OPTIMALITY_TOLERANCE * opt)
}

/// Runs the loop to completion or early stop.
pub fn run(
    instance: &TspInstance,
    config: &EngineConfig,
    selector: &mut dyn Selector,
    meta: RunMeta,
) -> Result<RunRecord, RunError> {
    let started = Instant::now();
    let optimal = instance.optimal_length();
    let mut state = EngineState::new(instance, config);
    let mut record = RunRecord::start(instance, config, &meta, state.best().clone());

    let fail = |mut record: RunRecord, failure: RunFailure| {
        record.error = Some(failure.to_string());
        record.duration = started.elapsed();
        RunError { source: failure, partial: Box::new(record) }
    };
    if let Err(msg) = config.validate() {
        return Err(fail(record, RunFailure::Config(msg)));
    }
    if config.early_stop_on_optimal && optimal.is_none() {
        return Err(fail(
            record,
            RunFailure::Config(format!("early stop needs a known optimum for instance `{}`", instance.id())),
        ));
    }

    record.push(state.snapshot(state.temperature.current()), state.best());
    if reached_optimum(state.best_length(), optimal) {
        record.success_step = Some(0);
    }
    while state.generation + 1 < config.max_generations {
        if config.early_stop_on_optimal && record.success_step.is_some() {
            break;
        }
        match step_generation(&mut state, instance, config, selector) {
            Ok(outcome) => {
                record.push(outcome.record, state.best());
                record.fallback_events.extend(outcome.fallback);
                if record.success_step.is_none() && reached_optimum(state.best_length(), optimal) {
                    record.success_step = Some(state.generation);
                }
            }
            Err(e) => return Err(fail(record, e.into())),
        }
    }
    record.completed = true;
    record.duration = started.elapsed();
    Ok(record)
}

#[cfg(test)]
mod tests;
