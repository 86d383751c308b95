//! Seeded instance generators.
//!
//! Every generator draws from `ChaCha8Rng::seed_from_u64(seed)`, which is
//! portable across platforms, so an instance regenerates identically anywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Family, Point, TspInstance};
use crate::error::{validation, Result};

pub const DEFAULT_EXTENT: f64 = 100.0;

/// Cluster layout used by [`generate_clu`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub clusters: usize,
    pub spread: f64,
}

impl ClusterParams {
    /// `ceil(n / 5)` clusters with standard deviation `extent / 20`.
    pub fn defaults(n: usize, extent: f64) -> Self {
        Self { clusters: n.div_ceil(5).max(1), spread: extent / 20.0 }
    }
}

fn check_extent(extent: f64) -> Result<()> {
    if extent.is_finite() && extent > 0.0 {
        Ok(())
    } else {
        Err(validation(format!("extent must be a positive real, got {extent}")))
    }
}

/// `n` nodes drawn uniformly from `[0, extent]²`.
pub fn generate_rue(n: usize, seed: u64, extent: f64) -> Result<TspInstance> {
    if n < 3 {
        return Err(validation(format!("rue instances need n >= 3, got {n}")));
    }
    check_extent(extent)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n)
        .map(|_| {
            let x = rng.random::<f64>() * extent;
            let y = rng.random::<f64>() * extent;
            Point::new(x, y)
        })
        .collect();
    let id = format!("rue-{n}-{seed}");
    Ok(TspInstance::new(id, Family::Rue, seed, nodes)?.with_generation(extent, None))
}

/// `n` nodes scattered around `clusters` uniformly placed centers.
///
/// Node `i` belongs to center `i % clusters` and is offset by an isotropic
/// Gaussian with standard deviation `spread`, then clamped into `[0, extent]²`.
pub fn generate_clu(n: usize, params: ClusterParams, seed: u64, extent: f64) -> Result<TspInstance> {
    let ClusterParams { clusters, spread } = params;
    if n < 3 {
        return Err(validation(format!("clu instances need n >= 3, got {n}")));
    }
    if clusters == 0 || clusters > n {
        return Err(validation(format!("cluster count must be in [1, {n}], got {clusters}")));
    }
    check_extent(extent)?;
    let noise =
        Normal::new(0.0, spread).map_err(|_| validation(format!("spread must be a positive real, got {spread}")))?;
    if spread <= 0.0 {
        return Err(validation(format!("spread must be a positive real, got {spread}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Point> = (0..clusters)
        .map(|_| {
            let x = rng.random::<f64>() * extent;
            let y = rng.random::<f64>() * extent;
            Point::new(x, y)
        })
        .collect();
    let nodes = (0..n)
        .map(|i| {
            let c = centers[i % clusters];
            let x = (c.x + noise.sample(&mut rng)).clamp(0.0, extent);
            let y = (c.y + noise.sample(&mut rng)).clamp(0.0, extent);
            Point::new(x, y)
        })
        .collect();
    let id = format!("clu-{n}-{seed}");
    Ok(TspInstance::new(id, Family::Clu, seed, nodes)?.with_generation(extent, Some(params)))
}
