//! Exact solvers: Held–Karp dynamic programming and exhaustive enumeration.

use serde::{Deserialize, Serialize};

use super::{closed_length, TspInstance};
use crate::error::{Error, Result};

/// Largest instance [`held_karp_optimal`] accepts.
pub const HELD_KARP_CAP: usize = 25;
/// Largest instance [`brute_force_optimal`] accepts.
pub const BRUTE_FORCE_CAP: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub length: f64,
    pub tour: Vec<usize>,
}

fn solution(instance: &TspInstance, tour: Vec<usize>) -> Solution {
    Solution { length: closed_length(instance, &tour), tour }
}

/// Exact optimum by Held–Karp over subsets of nodes `1..n`, anchored at node 0.
///
/// The table is stored one subset size at a time. Within a layer, a subset
/// `S` of size `k` lives at its colexicographic rank, and for every end node
/// `j ∈ S` the cost of the cheapest path `0 → … → j` visiting exactly `S`
/// sits at `rank(S) * k + (number of members of S below j)`. Only the
/// current and previous cost layers are kept; predecessor bytes are kept for
/// every layer so the tour can be rebuilt. For 25 nodes this needs roughly
/// 0.75 GB.
///
/// The reported length is re-summed along the returned tour so that it is
/// exactly `tour_length` of that tour.
pub fn held_karp_optimal(instance: &TspInstance) -> Result<Solution> {
    let n = instance.len();
    if n > HELD_KARP_CAP {
        return Err(Error::Capacity(format!(
            "{n} nodes exceeds the Held–Karp cap of {HELD_KARP_CAP}; \
             brute-force enumeration is capped at {BRUTE_FORCE_CAP} nodes and cannot help either"
        )));
    }
    let m = n - 1;
    // bit b of a subset mask stands for node b + 1
    let dist: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| instance.distance(a, b)).collect()).collect();
    let binom = binomials(m);
    let rank = |mask: u32| -> usize {
        let mut r = 0;
        let mut t = 0;
        let mut rest = mask;
        while rest != 0 {
            let b = rest.trailing_zeros() as usize;
            t += 1;
            r += binom[b][t];
            rest &= rest - 1;
        }
        r
    };

    // layer 1: paths 0 -> j
    let mut prev_cost: Vec<f64> = (0..m).map(|b| dist[0][b + 1]).collect();
    let mut parents: Vec<Vec<u8>> = vec![vec![u8::MAX; m]];

    for k in 2..=m {
        let count = binom[m][k];
        let mut cost = vec![f64::INFINITY; count * k];
        let mut parent = vec![u8::MAX; count * k];
        let mut mask: u32 = (1u32 << k) - 1;
        for r in 0..count {
            let mut members = mask;
            let mut pos_j = 0;
            while members != 0 {
                let j = members.trailing_zeros() as usize;
                members &= members - 1;
                let without = mask & !(1u32 << j);
                let base = rank(without) * (k - 1);
                let mut best = f64::INFINITY;
                let mut best_i = u8::MAX;
                let mut others = without;
                let mut pos_i = 0;
                while others != 0 {
                    let i = others.trailing_zeros() as usize;
                    others &= others - 1;
                    let c = prev_cost[base + pos_i] + dist[i + 1][j + 1];
                    if c < best {
                        best = c;
                        best_i = i as u8;
                    }
                    pos_i += 1;
                }
                cost[r * k + pos_j] = best;
                parent[r * k + pos_j] = best_i;
                pos_j += 1;
            }
            mask = next_combination(mask);
        }
        prev_cost = cost;
        parents.push(parent);
    }

    // close the cycle back to node 0
    let full: u32 = if m == 32 { u32::MAX } else { (1u32 << m) - 1 };
    let (mut last, _) = (0..m)
        .map(|j| (j, prev_cost[j] + dist[j + 1][0]))
        .fold((usize::MAX, f64::INFINITY), |acc, (j, c)| if c < acc.1 { (j, c) } else { acc });

    let mut tour_rev = Vec::with_capacity(n);
    let mut mask = full;
    for k in (1..=m).rev() {
        tour_rev.push(last + 1);
        let pos = (mask & ((1u32 << last) - 1)).count_ones() as usize;
        let p = parents[k - 1][rank(mask) * k + pos];
        mask &= !(1u32 << last);
        last = p as usize;
    }
    let mut tour = vec![0];
    tour.extend(tour_rev.into_iter().rev());
    Ok(solution(instance, tour))
}

/// `binom[a][b]` = C(a, b) for `0 <= a, b <= m`.
fn binomials(m: usize) -> Vec<Vec<usize>> {
    let mut c = vec![vec![0usize; m + 2]; m + 1];
    for a in 0..=m {
        c[a][0] = 1;
        for b in 1..=a {
            c[a][b] = c[a - 1][b - 1] + if b < a { c[a - 1][b] } else { 0 };
        }
    }
    c
}

/// Next larger mask with the same popcount (Gosper's hack).
fn next_combination(mask: u32) -> u32 {
    let lowest = mask & mask.wrapping_neg();
    let ripple = mask.wrapping_add(lowest);
    if ripple == 0 {
        return 0;
    }
    (((ripple ^ mask) >> 2) / lowest) | ripple
}

/// Exhaustive optimum over all `(n-1)!/2` distinct closed tours.
///
/// Node 0 is fixed first and only orientations with `tour[1] < tour[n-1]`
/// are evaluated.
pub fn brute_force_optimal(instance: &TspInstance) -> Result<Solution> {
    let n = instance.len();
    if n > BRUTE_FORCE_CAP {
        return Err(Error::Capacity(format!("{n} nodes exceeds the brute-force cap of {BRUTE_FORCE_CAP}")));
    }
    let mut rest: Vec<usize> = (1..n).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    permute(&mut rest, 0, &mut |perm| {
        if perm[0] > perm[perm.len() - 1] {
            return;
        }
        let mut tour = Vec::with_capacity(n);
        tour.push(0);
        tour.extend_from_slice(perm);
        let len = closed_length(instance, &tour);
        if best.as_ref().is_none_or(|(b, _)| len < *b) {
            best = Some((len, tour));
        }
    });
    let (_, tour) = best.expect("at least one tour exists for n >= 3");
    Ok(solution(instance, tour))
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}
