//! Parent pairing strategies.
//!
//! A [`PairingPlan`] names its parents by id. Ids `0..pool.len()` are the
//! members of the current population in pool order. The child of the `k`-th
//! pair is re-injected into the pool under id `pool.len() + k` and may be
//! chosen as a parent by any later pair in the same plan. Under the
//! monogamous strategies an original pool member parents at most one pair.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operators::{edge_distance_seq, order_crossover_seq, Crossover, Cut, Mutation, OperatorCatalog};
use crate::tsp::{Individual, TspInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Llm,
    Random,
    Mock,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Llm => "llm",
            Provenance::Random => "random",
            Provenance::Mock => "mock",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedPair {
    pub first: usize,
    pub second: usize,
    pub crossover: Crossover,
    pub mutation: Mutation,
    /// Finished offspring route, present when the model executed the operators.
    pub child: Option<Vec<usize>>,
}

impl PlannedPair {
    pub fn new(first: usize, second: usize, crossover: Crossover, mutation: Mutation) -> Self {
        Self { first, second, crossover, mutation, child: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingPlan {
    pub pairs: Vec<PlannedPair>,
    pub provenance: Provenance,
    /// Pairs rewritten by the repair policy.
    pub repairs: usize,
    /// Extra model calls issued for this plan.
    pub requeries: usize,
}

impl PairingPlan {
    pub fn new(pairs: Vec<PlannedPair>, provenance: Provenance) -> Self {
        Self { pairs, provenance, repairs: 0, requeries: 0 }
    }

    /// Checks the plan's structural invariants against a pool of `pool_len`
    /// members and a requested pair count.
    pub fn check(&self, pool_len: usize, offspring_needed: usize, monogamous: bool) -> Result<(), PlanViolation> {
        let mut used = vec![false; pool_len];
        for (k, pair) in self.pairs.iter().enumerate() {
            if pair.first == pair.second {
                return Err(PlanViolation::SelfPair { pair: k, id: pair.first });
            }
            for id in [pair.first, pair.second] {
                if id >= pool_len + k {
                    return Err(PlanViolation::UnknownId { pair: k, id });
                }
                if monogamous && id < pool_len && std::mem::replace(&mut used[id], true) {
                    return Err(PlanViolation::Reused { pair: k, id });
                }
            }
        }
        if self.pairs.len() != offspring_needed {
            return Err(PlanViolation::Count { expected: offspring_needed, got: self.pairs.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanViolation {
    #[error("pair {pair} uses individual {id} twice")]
    SelfPair { pair: usize, id: usize },
    #[error("pair {pair} reuses individual {id}, which already has a partner")]
    Reused { pair: usize, id: usize },
    #[error("pair {pair} refers to individual {id}, which is not in the pool yet")]
    UnknownId { pair: usize, id: usize },
    #[error("plan has {got} pairs, {expected} requested")]
    Count { expected: usize, got: usize },
}

#[derive(Debug, Clone, Error)]
pub enum SelectionError {
    #[error("invalid selection request: {0}")]
    Request(String),
    #[error("cannot form {needed} pairs: only {formed} possible without reusing a parent")]
    Infeasible { needed: usize, formed: usize },
    #[error("model transport failed: {0}")]
    Transport(String),
    #[error("model selection failed after {attempts} attempts: {reason}")]
    Exhausted { attempts: usize, reason: String, last_raw: String },
}

/// Everything a strategy sees for one generation.
#[derive(Debug, Clone, Copy)]
pub struct SelectionRequest<'a> {
    pub pool: &'a [Individual],
    pub offspring_needed: usize,
    pub instance: &'a TspInstance,
    /// Seed for strategies that draw random numbers.
    pub seed: u64,
    /// Current sampling temperature for model-backed strategies.
    pub temperature: f64,
}

impl SelectionRequest<'_> {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.pool.len() < 2 {
            return Err(SelectionError::Request(format!(
                "pool must hold at least 2 individuals, got {}",
                self.pool.len()
            )));
        }
        if self.offspring_needed == 0 {
            return Err(SelectionError::Request("offspring_needed must be at least 1".into()));
        }
        Ok(())
    }
}

/// Shared contract of every pairing strategy.
pub trait Selector {
    fn select(&mut self, req: &SelectionRequest<'_>) -> Result<PairingPlan, SelectionError>;
}

/// Uniform random pairing, the LMEA baseline.
///
/// Parents are drawn with replacement across pairs; operators are drawn
/// uniformly from the catalog.
#[derive(Debug, Clone, Default)]
pub struct RandomSelector {
    pub catalog: OperatorCatalog,
}

impl Selector for RandomSelector {
    fn select(&mut self, req: &SelectionRequest<'_>) -> Result<PairingPlan, SelectionError> {
        select_random(req, &self.catalog)
    }
}

pub fn select_random(req: &SelectionRequest<'_>, catalog: &OperatorCatalog) -> Result<PairingPlan, SelectionError> {
    req.validate()?;
    if catalog.crossovers.is_empty() || catalog.mutations.is_empty() {
        return Err(SelectionError::Request("operator catalog is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let p = req.pool.len();
    let pairs = (0..req.offspring_needed)
        .map(|_| {
            let a = rng.random_range(0..p);
            let mut b = rng.random_range(0..p - 1);
            if b >= a {
                b += 1;
            }
            let crossover = catalog.crossovers[rng.random_range(0..catalog.crossovers.len())];
            let mutation = catalog.mutations[rng.random_range(0..catalog.mutations.len())];
            PlannedPair::new(a, b, crossover, mutation)
        })
        .collect();
    Ok(PairingPlan::new(pairs, Provenance::Random))
}

/// Relative importance of edge diversity and fitness in the mock scorer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MockWeights {
    pub fitness: f64,
    pub diversity: f64,
}

impl Default for MockWeights {
    fn default() -> Self {
        Self { fitness: 1.0, diversity: 1.0 }
    }
}

/// Deterministic stand-in for the model-driven PAIR selector.
#[derive(Debug, Clone, Default)]
pub struct MockPairSelector {
    pub weights: MockWeights,
}

impl Selector for MockPairSelector {
    fn select(&mut self, req: &SelectionRequest<'_>) -> Result<PairingPlan, SelectionError> {
        select_pair_mock(req, self.weights)
    }
}

/// Score of `candidate` as a mate for `chooser`: rewards edges the chooser
/// lacks and penalizes tours longer than the chooser's.
pub fn mate_score(chooser: &Individual, candidate: &Individual, weights: MockWeights) -> f64 {
    let n = chooser.len().max(1) as f64;
    let diversity = edge_distance_seq(chooser.tour(), candidate.tour()).unwrap_or(0) as f64 / n;
    let fitness = if chooser.length() > 0.0 { candidate.length() / chooser.length() - 1.0 } else { 0.0 };
    weights.diversity * diversity - weights.fitness * fitness
}

/// Selection pool that grows as pairs are formed.
///
/// Original members leave once paired. Re-injected offspring are preferred
/// while unpaired; once fewer than two unpaired candidates remain, already
/// paired offspring become eligible again so the plan can be completed.
pub(crate) struct MatingPool<'a> {
    originals: &'a [Individual],
    offspring: Vec<Individual>,
    used: Vec<bool>,
}

impl<'a> MatingPool<'a> {
    pub(crate) fn new(originals: &'a [Individual]) -> Self {
        Self { originals, offspring: Vec::new(), used: vec![false; originals.len()] }
    }

    pub(crate) fn get(&self, id: usize) -> &Individual {
        if id < self.originals.len() {
            &self.originals[id]
        } else {
            &self.offspring[id - self.originals.len()]
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.used.len()
    }

    pub(crate) fn is_original(&self, id: usize) -> bool {
        id < self.originals.len()
    }

    pub(crate) fn eligible(&self) -> Vec<usize> {
        let fresh: Vec<usize> = (0..self.len()).filter(|&id| !self.used[id]).collect();
        if fresh.len() >= 2 {
            return fresh;
        }
        (0..self.len()).filter(|&id| !self.used[id] || !self.is_original(id)).collect()
    }

    pub(crate) fn mark_used(&mut self, id: usize) {
        self.used[id] = true;
    }

    pub(crate) fn push_offspring(&mut self, child: Individual) {
        self.offspring.push(child);
        self.used.push(false);
    }

    /// Shortest candidate, preferring unpaired members over re-admitted
    /// offspring; ties go to the lower id.
    pub(crate) fn chooser(&self, candidates: &[usize]) -> Option<usize> {
        let fresh: Vec<usize> = candidates.iter().copied().filter(|&id| !self.used[id]).collect();
        let from = if fresh.is_empty() { candidates } else { &fresh };
        from.iter().copied().min_by(|&a, &b| self.get(a).length().total_cmp(&self.get(b).length()).then(a.cmp(&b)))
    }

    /// Best mate for `chooser` among `candidates`; ties go to the lower id.
    pub(crate) fn best_mate(&self, chooser: usize, candidates: &[usize], weights: MockWeights) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &id in candidates {
            if id == chooser {
                continue;
            }
            let score = mate_score(self.get(chooser), self.get(id), weights);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((id, score));
            }
        }
        best.map(|(id, _)| id)
    }

    /// The child the mock convention predicts for a pair: OX through the
    /// middle of the chooser, no mutation.
    pub(crate) fn predicted_child(&self, instance: &TspInstance, a: usize, b: usize) -> Individual {
        let (p1, p2) = (self.get(a), self.get(b));
        let child = order_crossover_seq(p1.tour(), p2.tour(), Cut::midpoint(p1.len()))
            .expect("pool members are permutations of the same instance");
        Individual::new(instance, child).expect("OX preserves permutations")
    }
}

/// Deterministic PAIR pairing.
///
/// Repeatedly, the shortest eligible tour becomes the chooser and picks the
/// eligible mate maximizing [`mate_score`]. Both leave the pool and the pair's
/// predicted child (OX with a midpoint cut, no mutation) joins it. Every pair
/// uses `OX` and `inversion`.
pub fn select_pair_mock(req: &SelectionRequest<'_>, weights: MockWeights) -> Result<PairingPlan, SelectionError> {
    req.validate()?;
    let mut pool = MatingPool::new(req.pool);
    let mut pairs = Vec::with_capacity(req.offspring_needed);
    for _ in 0..req.offspring_needed {
        let candidates = pool.eligible();
        if candidates.len() < 2 {
            return Err(SelectionError::Infeasible { needed: req.offspring_needed, formed: pairs.len() });
        }
        let chooser = pool.chooser(&candidates).expect("at least two candidates");
        let mate = pool.best_mate(chooser, &candidates, weights).expect("at least two candidates");
        pool.mark_used(chooser);
        pool.mark_used(mate);
        let child = pool.predicted_child(req.instance, chooser, mate);
        pool.push_offspring(child);
        pairs.push(PlannedPair::new(chooser, mate, Crossover::Ox, Mutation::Inversion));
    }
    Ok(PairingPlan::new(pairs, Provenance::Mock))
}
