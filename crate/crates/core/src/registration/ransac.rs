use rand::seq::index::sample;
use rayon::prelude::*;

use super::estimate::{estimate_rigid, estimate_transform};
use super::matching::{CorrespondenceSet, RansacParams};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::transform::RigidTransform;

/// Result of a RANSAC run.
#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutcome {
    pub transform: RigidTransform,
    /// Indices into the correspondence set.
    pub inliers: Vec<usize>,
}

fn inliers_of(tf: &RigidTransform, c: &CorrespondenceSet, radius: f64) -> Vec<usize> {
    (0..c.len())
        .filter(|&i| (tf.apply(&c.coords_target[i]) - c.coords_source[i]).norm() < radius)
        .collect()
}

/// Hypothesize-and-verify around [`estimate_transform`]. Iteration `i` draws
/// its sample with a seed derived from `params.seed` and `i`, so the result
/// does not depend on thread scheduling. Ties in inlier count go to the
/// earliest iteration; the final transform is refit on the best inlier set.
pub fn ransac_estimate(c: &CorrespondenceSet, params: &RansacParams) -> Result<RansacOutcome> {
    if params.sample_size < 3 {
        return Err(Error::InvalidInput(format!(
            "ransac sample size must be at least 3, got {}",
            params.sample_size
        )));
    }
    if !(params.inlier_radius > 0.0) {
        return Err(Error::InvalidInput("ransac inlier radius must be positive".into()));
    }
    if c.len() < params.sample_size {
        return Err(Error::TooFew {
            requested: params.sample_size,
            available: c.len(),
        });
    }
    let best = (0..params.iterations)
        .into_par_iter()
        .filter_map(|it| {
            let mut rng = rng_from_seed(derive_seed(params.seed, it as u64));
            let idx = sample(&mut rng, c.len(), params.sample_size).into_vec();
            let f: Vec<_> = idx.iter().map(|&i| c.coords_target[i]).collect();
            let g: Vec<_> = idx.iter().map(|&i| c.coords_source[i]).collect();
            let tf = estimate_rigid(&f, &g).ok()?;
            let count = inliers_of(&tf, c, params.inlier_radius).len();
            Some((count, it, tf))
        })
        .reduce_with(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    let Some((count, _, hypothesis)) = best else {
        return Err(Error::RansacFailed);
    };
    if count < 3 {
        return Err(Error::RansacFailed);
    }
    let inliers = inliers_of(&hypothesis, c, params.inlier_radius);
    let transform = estimate_transform(&c.subset(&inliers)).unwrap_or(hypothesis);
    Ok(RansacOutcome { transform, inliers })
}
