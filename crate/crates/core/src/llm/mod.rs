//! Everything between the engine and a chat model.
//!
//! [`LlmSelector`] renders the population into a prompt, sends it through a
//! [`Transport`], parses the reply with the line grammar in [`parse`] and
//! turns it into a [`PairingPlan`] that satisfies the monogamy rules no
//! matter what the model said.
//!
//! Invalid replies are handled in two ways. Pairs that break the pairing
//! rules (self-pairs, reused parents) are repaired locally: the offending
//! partner is replaced by the best eligible mate under the mock scoring rule
//! and the pair's child is dropped so the engine recomputes it. Replies that
//! cannot be used at all (no records, bad operator, invalid child, too few
//! pairs) are re-queried with a corrective note, at most
//! `max_requeries_per_generation` times.

pub mod parse;
pub mod prompt;
pub mod temperature;
pub mod transport;

use serde::{Deserialize, Serialize};

pub use parse::{format_record, format_records, parse_response, ParseError};
pub use prompt::{
    build_prompt, ExecutionMode, PromptBundle, PromptError, PromptInput, PromptTemplates, DEFAULT_CHAR_BUDGET,
};
pub use temperature::{advance_temperature, TemperatureState};
pub use transport::{
    complete, scripted_transport, ApiKey, ChatRequest, Completion, HttpTransport, ModelEndpointConfig, ScriptStep,
    ScriptedTransport, Transport, TransportError, API_KEY_ENV,
};

use crate::operators::OperatorCatalog;
use crate::selection::{
    MatingPool, MockWeights, PairingPlan, PlannedPair, Provenance, SelectionError, SelectionRequest, Selector,
};
use crate::tsp::Individual;

/// How many model calls make up one generation's plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallGranularity {
    /// One call returns the whole plan.
    #[default]
    PerGeneration,
    /// One call per pair, each showing the current eligible pool.
    PerPair,
}

/// PAIR selection backed by a chat model.
pub struct LlmSelector {
    pub endpoint: ModelEndpointConfig,
    pub templates: PromptTemplates,
    pub catalog: OperatorCatalog,
    pub mode: ExecutionMode,
    pub granularity: CallGranularity,
    pub char_budget: usize,
    /// Scoring used when a pair has to be repaired.
    pub repair_weights: MockWeights,
    transport: Box<dyn Transport>,
}

impl LlmSelector {
    pub fn new(endpoint: ModelEndpointConfig, transport: Box<dyn Transport>, mode: ExecutionMode) -> Self {
        Self {
            endpoint,
            templates: PromptTemplates::default(),
            catalog: OperatorCatalog::default(),
            mode,
            granularity: CallGranularity::default(),
            char_budget: DEFAULT_CHAR_BUDGET,
            repair_weights: MockWeights::default(),
            transport,
        }
    }

    fn call(&mut self, bundle: &PromptBundle, temperature: f64) -> Result<String, SelectionError> {
        complete(&self.endpoint, self.transport.as_mut(), bundle, temperature)
            .map(|c| c.text)
            .map_err(|e| SelectionError::Transport(e.to_string()))
    }

    fn prompt(&self, input: &PromptInput<'_>) -> Result<PromptBundle, SelectionError> {
        build_prompt(input, &self.catalog, self.mode, &self.templates, self.char_budget)
            .map_err(|e| SelectionError::Request(e.to_string()))
    }

    fn select_per_generation(&mut self, req: &SelectionRequest<'_>) -> Result<PairingPlan, SelectionError> {
        let needed = req.offspring_needed;
        let bundle = self.prompt(&PromptInput::for_pool(req.instance, req.pool, needed))?;
        let mut prompt = bundle.clone();
        let mut requeries = 0;
        loop {
            let raw = self.call(&prompt, req.temperature)?;
            let outcome = parse_response(&raw, self.mode, req.pool.len(), req.instance.len())
                .map_err(|e| e.to_string())
                .and_then(|pairs| self.assemble(req, pairs));
            match outcome {
                Ok((pairs, repairs)) => {
                    return Ok(PairingPlan { pairs, provenance: Provenance::Llm, repairs, requeries });
                }
                Err(reason) => {
                    if requeries >= self.endpoint.max_requeries_per_generation as usize {
                        return Err(SelectionError::Exhausted { attempts: requeries + 1, reason, last_raw: raw });
                    }
                    log::info!("model reply rejected ({reason}); re-querying");
                    requeries += 1;
                    prompt = bundle.with_correction(&correction(&reason, needed));
                }
            }
        }
    }

    /// Applies the pairing rules to parsed pairs in order, repairing what can
    /// be repaired. Fails when the reply holds fewer usable pairs than needed.
    fn assemble(
        &self,
        req: &SelectionRequest<'_>,
        parsed: Vec<PlannedPair>,
    ) -> Result<(Vec<PlannedPair>, usize), String> {
        let needed = req.offspring_needed;
        if parsed.len() < needed {
            return Err(format!("the reply has {} PAIR lines but {needed} are required", parsed.len()));
        }
        let mut pool = MatingPool::new(req.pool);
        let mut repairs = parsed.len() - needed;
        let mut pairs = Vec::with_capacity(needed);
        for pair in parsed.into_iter().take(needed) {
            let (pair, repaired) = self.admit(req, &mut pool, pair)?;
            repairs += usize::from(repaired);
            pairs.push(pair);
        }
        let plan = PairingPlan::new(pairs, Provenance::Llm);
        plan.check(req.pool.len(), needed, true).map_err(|e| e.to_string())?;
        Ok((plan.pairs, repairs))
    }

    /// Admits one pair into the growing plan, replacing ineligible partners.
    fn admit(
        &self,
        req: &SelectionRequest<'_>,
        pool: &mut MatingPool<'_>,
        pair: PlannedPair,
    ) -> Result<(PlannedPair, bool), String> {
        let eligible = pool.eligible();
        let ok = |id: usize| eligible.contains(&id);
        let (anchor, other) = if ok(pair.first) {
            (pair.first, pair.second)
        } else if ok(pair.second) {
            (pair.second, pair.first)
        } else {
            let chooser =
                pool.chooser(&eligible).ok_or_else(|| "no eligible individuals remain in the pool".to_string())?;
            (chooser, usize::MAX)
        };
        let mate = if other != anchor && ok(other) {
            other
        } else {
            pool.best_mate(anchor, &eligible, self.repair_weights)
                .ok_or_else(|| format!("individual {anchor} has no eligible partner"))?
        };
        let repaired = (anchor, mate) != (pair.first, pair.second);
        if repaired {
            log::info!("repaired pair ({}, {}) to ({anchor}, {mate})", pair.first, pair.second);
        }
        let child = if repaired { None } else { pair.child };
        pool.mark_used(anchor);
        pool.mark_used(mate);
        let offspring = match &child {
            Some(route) => Individual::new(req.instance, route.clone()).map_err(|e| e.to_string())?,
            None => pool.predicted_child(req.instance, anchor, mate),
        };
        pool.push_offspring(offspring);
        Ok((
            PlannedPair { first: anchor, second: mate, crossover: pair.crossover, mutation: pair.mutation, child },
            repaired,
        ))
    }

    fn select_per_pair(&mut self, req: &SelectionRequest<'_>) -> Result<PairingPlan, SelectionError> {
        let mut pool = MatingPool::new(req.pool);
        let mut pairs = Vec::with_capacity(req.offspring_needed);
        let mut repairs = 0;
        let mut requeries = 0;
        for _ in 0..req.offspring_needed {
            let eligible = pool.eligible();
            if eligible.len() < 2 {
                return Err(SelectionError::Infeasible { needed: req.offspring_needed, formed: pairs.len() });
            }
            let members: Vec<(usize, &Individual)> = eligible.iter().map(|&id| (id, pool.get(id))).collect();
            let input =
                PromptInput { instance: req.instance, members, offspring_needed: 1, first_offspring_id: pool.len() };
            let bundle = self.prompt(&input)?;
            let mut prompt = bundle.clone();
            let parsed = loop {
                let raw = self.call(&prompt, req.temperature)?;
                match parse_response(&raw, self.mode, pool.len(), req.instance.len()) {
                    Ok(mut parsed) => {
                        repairs += parsed.len() - 1;
                        break parsed.swap_remove(0);
                    }
                    Err(e) => {
                        let reason = e.to_string();
                        if requeries >= self.endpoint.max_requeries_per_generation as usize {
                            return Err(SelectionError::Exhausted { attempts: requeries + 1, reason, last_raw: raw });
                        }
                        requeries += 1;
                        prompt = bundle.with_correction(&correction(&reason, 1));
                    }
                }
            };
            let (pair, repaired) = self.admit(req, &mut pool, parsed).map_err(|reason| SelectionError::Exhausted {
                attempts: requeries + 1,
                reason,
                last_raw: String::new(),
            })?;
            repairs += usize::from(repaired);
            pairs.push(pair);
        }
        Ok(PairingPlan { pairs, provenance: Provenance::Llm, repairs, requeries })
    }
}

fn correction(reason: &str, needed: usize) -> String {
    format!(
        "Your previous answer could not be used: {reason}. \
         Answer again with exactly {needed} PAIR lines in the required format."
    )
}

impl Selector for LlmSelector {
    fn select(&mut self, req: &SelectionRequest<'_>) -> Result<PairingPlan, SelectionError> {
        req.validate()?;
        match self.granularity {
            CallGranularity::PerGeneration => self.select_per_generation(req),
            CallGranularity::PerPair => self.select_per_pair(req),
        }
    }
}

/// Convenience wrapper mirroring the other strategies' free functions.
pub fn select_pair_llm(req: &SelectionRequest<'_>, selector: &mut LlmSelector) -> Result<PairingPlan, SelectionError> {
    selector.select(req)
}
