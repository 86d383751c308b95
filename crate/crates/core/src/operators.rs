//! Permutation crossover and mutation operators.
//!
//! The catalog is fixed: crossovers `OX`, `PMX`, `CX` and mutations `swap`,
//! `insertion`, `inversion`. These names are also the vocabulary used in
//! prompts and parsed from model replies.
//!
//! Every operator exists in two forms. The `*_seq` functions work on raw
//! label sequences (any two permutations of the same label set) and are
//! what the tests trace by hand. The [`Individual`] forms validate parents
//! against an instance and cache the child's length. Cut points and loci are
//! always supplied by the caller.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::tsp::{validate_tour, Individual, TspInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Crossover {
    #[serde(rename = "OX")]
    Ox,
    #[serde(rename = "PMX")]
    Pmx,
    #[serde(rename = "CX")]
    Cx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mutation {
    Swap,
    Insertion,
    Inversion,
}

impl Crossover {
    pub const ALL: [Crossover; 3] = [Crossover::Ox, Crossover::Pmx, Crossover::Cx];

    pub fn name(self) -> &'static str {
        match self {
            Crossover::Ox => "OX",
            Crossover::Pmx => "PMX",
            Crossover::Cx => "CX",
        }
    }
}

impl Mutation {
    pub const ALL: [Mutation; 3] = [Mutation::Swap, Mutation::Insertion, Mutation::Inversion];

    pub fn name(self) -> &'static str {
        match self {
            Mutation::Swap => "swap",
            Mutation::Insertion => "insertion",
            Mutation::Inversion => "inversion",
        }
    }
}

impl fmt::Display for Crossover {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Crossover {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Crossover::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| validation(format!("unknown crossover operator `{s}`")))
    }
}

impl FromStr for Mutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mutation::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| validation(format!("unknown mutation operator `{s}`")))
    }
}

/// The operators offered to a selector, in advertised order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorCatalog {
    pub crossovers: Vec<Crossover>,
    pub mutations: Vec<Mutation>,
}

impl Default for OperatorCatalog {
    fn default() -> Self {
        Self { crossovers: Crossover::ALL.to_vec(), mutations: Mutation::ALL.to_vec() }
    }
}

/// Half-open segment `[lo, hi)` of positions copied from the first parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cut {
    pub lo: usize,
    pub hi: usize,
}

impl Cut {
    pub fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }

    /// Cut through the middle, used where a fixed convention is needed.
    pub fn midpoint(n: usize) -> Self {
        Self { lo: n / 4, hi: n / 4 + n.div_ceil(2) }
    }

    fn check(self, n: usize) -> Result<()> {
        if self.lo < self.hi && self.hi <= n {
            Ok(())
        } else {
            Err(validation(format!("cut ({}, {}) is not a valid segment of {n} positions", self.lo, self.hi)))
        }
    }
}

/// Dense lookup table from label to a value, sized by the largest label.
fn label_table<T: Clone>(labels: &[usize], fill: T) -> Vec<T> {
    let max = labels.iter().copied().max().unwrap_or(0);
    vec![fill; max + 1]
}

fn check_parents(p1: &[usize], p2: &[usize]) -> Result<()> {
    if p1.len() != p2.len() {
        return Err(validation(format!("parents have different lengths ({} and {})", p1.len(), p2.len())));
    }
    let mut in_p1 = label_table(p1, false);
    for &v in p1 {
        if std::mem::replace(&mut in_p1[v], true) {
            return Err(validation(format!("first parent repeats label {v}")));
        }
    }
    let mut seen = vec![false; in_p1.len()];
    for &v in p2 {
        if v >= in_p1.len() || !in_p1[v] {
            return Err(validation(format!("label {v} of the second parent is not in the first")));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(validation(format!("second parent repeats label {v}")));
        }
    }
    Ok(())
}

/// Order crossover (OX).
///
/// The child keeps `p1[lo..hi)` in place. The remaining slots, starting at
/// `hi` and wrapping, take the nodes of `p2` read cyclically from `hi`,
/// skipping nodes already in the segment.
pub fn order_crossover_seq(p1: &[usize], p2: &[usize], cut: Cut) -> Result<Vec<usize>> {
    check_parents(p1, p2)?;
    let n = p1.len();
    cut.check(n)?;
    let mut taken = label_table(p1, false);
    let mut child = p1.to_vec();
    for &v in &p1[cut.lo..cut.hi] {
        taken[v] = true;
    }
    let mut slot = cut.hi % n;
    for k in 0..n {
        let v = p2[(cut.hi + k) % n];
        if taken[v] {
            continue;
        }
        child[slot] = v;
        slot = (slot + 1) % n;
    }
    Ok(child)
}

/// Partially mapped crossover (PMX).
///
/// The child keeps `p1[lo..hi)` in place. Every other position takes the
/// gene `p2` has there; a gene already in the segment is replaced by
/// following the positional mapping `p1[i] -> p2[i]` until it leaves the
/// segment.
pub fn pmx_crossover_seq(p1: &[usize], p2: &[usize], cut: Cut) -> Result<Vec<usize>> {
    check_parents(p1, p2)?;
    let n = p1.len();
    cut.check(n)?;
    let mut seg_pos: Vec<Option<usize>> = label_table(p1, None);
    for i in cut.lo..cut.hi {
        seg_pos[p1[i]] = Some(i);
    }
    let mut child = p1.to_vec();
    for i in (0..cut.lo).chain(cut.hi..n) {
        let mut v = p2[i];
        while let Some(j) = seg_pos[v] {
            v = p2[j];
        }
        child[i] = v;
    }
    Ok(child)
}

/// Cycle crossover (CX).
///
/// Positions are split into the cycles of the mapping `p1[i] -> position of
/// that gene in p2`; the first cycle (through position 0) comes from `p1`,
/// the next from `p2`, alternating.
pub fn cycle_crossover_seq(p1: &[usize], p2: &[usize]) -> Result<Vec<usize>> {
    check_parents(p1, p2)?;
    let n = p1.len();
    let mut pos_in_p1 = label_table(p1, 0usize);
    for (i, &v) in p1.iter().enumerate() {
        pos_in_p1[v] = i;
    }
    let mut child = vec![usize::MAX; n];
    let mut from_p1 = true;
    for start in 0..n {
        if child[start] != usize::MAX {
            continue;
        }
        let mut i = start;
        loop {
            child[i] = if from_p1 { p1[i] } else { p2[i] };
            i = pos_in_p1[p2[i]];
            if i == start {
                break;
            }
        }
        from_p1 = !from_p1;
    }
    Ok(child)
}

/// Applies a mutation at loci `(i, j)`.
///
/// * `swap` exchanges positions `i` and `j`.
/// * `insertion` removes the gene at `i` and reinserts it in front of the
///   gene originally at `j`.
/// * `inversion` reverses the inclusive segment between `i` and `j`.
pub fn mutate_seq(tour: &[usize], kind: Mutation, loci: (usize, usize)) -> Result<Vec<usize>> {
    let n = tour.len();
    let (i, j) = loci;
    if i >= n || j >= n {
        return Err(validation(format!("loci ({i}, {j}) out of range for {n} positions")));
    }
    let mut out = tour.to_vec();
    match kind {
        Mutation::Swap => out.swap(i, j),
        Mutation::Insertion => {
            let gene = out.remove(i);
            let at = if i < j { j - 1 } else { j };
            out.insert(at, gene);
        }
        Mutation::Inversion => {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            out[a..=b].reverse();
        }
    }
    Ok(out)
}

fn check_against(instance: &TspInstance, parent: &Individual, which: &str) -> Result<()> {
    validate_tour(instance.len(), parent.tour())
        .map_err(|e| validation(format!("{which} parent does not belong to instance `{}`: {e}", instance.id())))
}

pub fn order_crossover(p1: &Individual, p2: &Individual, cut: Cut, instance: &TspInstance) -> Result<Individual> {
    check_against(instance, p1, "first")?;
    check_against(instance, p2, "second")?;
    Individual::new(instance, order_crossover_seq(p1.tour(), p2.tour(), cut)?)
}

pub fn pmx_crossover(p1: &Individual, p2: &Individual, cut: Cut, instance: &TspInstance) -> Result<Individual> {
    check_against(instance, p1, "first")?;
    check_against(instance, p2, "second")?;
    Individual::new(instance, pmx_crossover_seq(p1.tour(), p2.tour(), cut)?)
}

pub fn cycle_crossover(p1: &Individual, p2: &Individual, instance: &TspInstance) -> Result<Individual> {
    check_against(instance, p1, "first")?;
    check_against(instance, p2, "second")?;
    Individual::new(instance, cycle_crossover_seq(p1.tour(), p2.tour())?)
}

/// Dispatches on the operator name. `CX` ignores the cut.
pub fn crossover(
    kind: Crossover,
    p1: &Individual,
    p2: &Individual,
    cut: Cut,
    instance: &TspInstance,
) -> Result<Individual> {
    match kind {
        Crossover::Ox => order_crossover(p1, p2, cut, instance),
        Crossover::Pmx => pmx_crossover(p1, p2, cut, instance),
        Crossover::Cx => cycle_crossover(p1, p2, instance),
    }
}

pub fn mutate(child: &Individual, kind: Mutation, loci: (usize, usize), instance: &TspInstance) -> Result<Individual> {
    check_against(instance, child, "mutated")?;
    Individual::new(instance, mutate_seq(child.tour(), kind, loci)?)
}

/// Number of undirected edges of `t1`'s closed tour missing from `t2`'s.
pub fn edge_distance(t1: &Individual, t2: &Individual) -> Result<usize> {
    edge_distance_seq(t1.tour(), t2.tour())
}

pub fn edge_distance_seq(t1: &[usize], t2: &[usize]) -> Result<usize> {
    let n = t1.len();
    if t2.len() != n {
        return Err(validation(format!("tours cover different instances ({n} and {} nodes)", t2.len())));
    }
    validate_tour(n, t1).map_err(|e| validation(format!("first tour: {e}")))?;
    validate_tour(n, t2).map_err(|e| validation(format!("second tour: {e}")))?;
    let mut neighbours = vec![[0usize; 2]; n];
    for i in 0..n {
        let v = t2[i];
        neighbours[v] = [t2[(i + n - 1) % n], t2[(i + 1) % n]];
    }
    Ok((0..n)
        .filter(|&i| {
            let (a, b) = (t1[i], t1[(i + 1) % n]);
            !neighbours[a].contains(&b)
        })
        .count())
}
