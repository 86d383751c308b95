//! Euclidean TSP instances, tours and exact solvers.
//!
//! Coordinates are plain `f64` in abstract length units and distances are
//! true Euclidean distances with no integer rounding.

mod generate;
mod io;
mod solve;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result, TourError};

pub use generate::{generate_clu, generate_rue, ClusterParams, DEFAULT_EXTENT};
pub use solve::{brute_force_optimal, held_karp_optimal, Solution, BRUTE_FORCE_CAP, HELD_KARP_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Instance family: uniformly random (`rue`) or clustered (`clu`) nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Rue,
    Clu,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Rue => "rue",
            Family::Clu => "clu",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rue" => Ok(Family::Rue),
            "clu" => Ok(Family::Clu),
            other => Err(validation(format!("unknown instance family `{other}`"))),
        }
    }
}

/// A 2-D Euclidean TSP instance.
///
/// `optimal_length`, when present, is the length of a provably optimal tour
/// as computed by [`held_karp_optimal`] or [`brute_force_optimal`].
#[derive(Debug, Clone, PartialEq)]
pub struct TspInstance {
    id: String,
    family: Family,
    seed: u64,
    nodes: Vec<Point>,
    optimal_length: Option<f64>,
    extent: f64,
    clusters: Option<ClusterParams>,
}

impl TspInstance {
    /// Builds an instance from explicit coordinates.
    pub fn new(id: impl Into<String>, family: Family, seed: u64, nodes: Vec<Point>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(validation(format!("an instance needs at least 3 nodes, got {}", nodes.len())));
        }
        if let Some(i) = nodes.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(validation(format!("node {i} has a non-finite coordinate")));
        }
        let extent = nodes.iter().map(|p| p.x.max(p.y)).fold(0.0_f64, f64::max);
        Ok(Self { id: id.into(), family, seed, nodes, optimal_length: None, extent, clusters: None })
    }

    /// Unit-less helper for tests and small examples: family `rue`, seed 0.
    pub fn from_coords(id: impl Into<String>, coords: &[(f64, f64)]) -> Result<Self> {
        let nodes = coords.iter().map(|&(x, y)| Point::new(x, y)).collect();
        Self::new(id, Family::Rue, 0, nodes)
    }

    pub(crate) fn with_generation(mut self, extent: f64, clusters: Option<ClusterParams>) -> Self {
        self.extent = extent;
        self.clusters = clusters;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Side length of the square the nodes were generated in.
    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn cluster_params(&self) -> Option<ClusterParams> {
        self.clusters
    }

    pub fn optimal_length(&self) -> Option<f64> {
        self.optimal_length
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.nodes[a].distance(&self.nodes[b])
    }

    /// Records a known optimal length. The value must be nonnegative.
    pub fn set_optimal_length(&mut self, length: f64) -> Result<()> {
        if !(length.is_finite() && length >= 0.0) {
            return Err(validation(format!("optimal length {length} is not a nonnegative real")));
        }
        self.optimal_length = Some(length);
        Ok(())
    }

    pub fn with_optimal_length(mut self, length: f64) -> Result<Self> {
        self.set_optimal_length(length)?;
        Ok(self)
    }

    /// Solves the instance exactly with Held–Karp and stores the optimum.
    pub fn solve_optimal(&mut self) -> Result<Solution> {
        let solution = held_karp_optimal(self)?;
        self.optimal_length = Some(solution.length);
        Ok(solution)
    }

    pub fn to_text(&self) -> String {
        io::write_instance(self)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        io::parse_instance(text)
    }
}

/// Checks that `tour` is a permutation of `0..n`.
pub fn validate_tour(n: usize, tour: &[usize]) -> Result<(), TourError> {
    let mut seen = vec![false; n];
    for &index in tour {
        if index >= n {
            return Err(TourError::OutOfRange { index, n });
        }
        if std::mem::replace(&mut seen[index], true) {
            return Err(TourError::Duplicate { index });
        }
    }
    if tour.len() != n {
        return Err(TourError::WrongLength { expected: n, got: tour.len() });
    }
    Ok(())
}

/// Closed-tour length: consecutive edges plus the edge from last back to first.
pub fn tour_length(instance: &TspInstance, tour: &[usize]) -> Result<f64> {
    validate_tour(instance.len(), tour)?;
    Ok(closed_length(instance, tour))
}

pub(crate) fn closed_length(instance: &TspInstance, tour: &[usize]) -> f64 {
    let n = tour.len();
    (0..n).map(|i| instance.distance(tour[i], tour[(i + 1) % n])).sum()
}

/// A candidate solution: a tour and its cached closed length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    tour: Vec<usize>,
    length: f64,
}

impl Individual {
    pub fn new(instance: &TspInstance, tour: Vec<usize>) -> Result<Self> {
        let length = tour_length(instance, &tour)?;
        Ok(Self { tour, length })
    }

    pub fn tour(&self) -> &[usize] {
        &self.tour
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.tour.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tour.is_empty()
    }

    pub fn into_tour(self) -> Vec<usize> {
        self.tour
    }
}
