use crate::cloud::{Point, PointCloud};
use crate::error::Result;
use crate::spatial::KnnIndex;
use crate::transform::RigidTransform;

use super::estimate::estimate_rigid;

/// Per-iteration history of an ICP run.
#[derive(Debug, Clone, PartialEq)]
pub struct IcpTrace {
    pub transform: RigidTransform,
    /// Closest-point mean squared residual of the initial transform, then
    /// after each accepted update.
    pub mse: Vec<f64>,
    pub iterations: usize,
}

/// Closest-point pairs: each source point, mapped back through `tf`, with its
/// nearest target point. Returns the target partners and the mean squared residual.
fn pair_up(index: &KnnIndex, source: &[Point], tf: &RigidTransform) -> (Vec<Point>, f64) {
    let mut partners = Vec::with_capacity(source.len());
    let mut sum = 0.0;
    for g in source {
        let nn = index.nearest(&tf.apply_inverse(g));
        sum += nn.distance * nn.distance;
        partners.push(index.points()[nn.index]);
    }
    (partners, sum / source.len() as f64)
}

/// Mean squared distance from each source point, mapped back through `tf`,
/// to its nearest target point.
pub fn closest_point_mse(source: &PointCloud, target: &PointCloud, tf: &RigidTransform) -> Result<f64> {
    let index = KnnIndex::from_points(target.coords().to_vec())?;
    Ok(pair_up(&index, source.coords(), tf).1)
}

/// Point-to-point ICP refining a target-to-source transform.
pub fn icp_refine_trace(
    source: &PointCloud,
    target: &PointCloud,
    initial: &RigidTransform,
    max_iters: usize,
    tol: f64,
) -> Result<IcpTrace> {
    let index = KnnIndex::from_points(target.coords().to_vec())?;
    let src = source.coords();
    let mut tf = *initial;
    let (mut partners, mut mse) = pair_up(&index, src, &tf);
    let mut history = vec![mse];
    let mut iterations = 0;
    while iterations < max_iters {
        let Ok(next) = estimate_rigid(&partners, src) else {
            break;
        };
        let (next_partners, next_mse) = pair_up(&index, src, &next);
        // Each step can only lower the residual; anything else is round-off.
        if !(next_mse < mse) {
            break;
        }
        iterations += 1;
        let gain = mse - next_mse;
        tf = next;
        partners = next_partners;
        mse = next_mse;
        history.push(mse);
        if gain < tol {
            break;
        }
    }
    Ok(IcpTrace {
        transform: tf,
        mse: history,
        iterations,
    })
}

pub fn icp_refine(
    source: &PointCloud,
    target: &PointCloud,
    initial: &RigidTransform,
    max_iters: usize,
    tol: f64,
) -> Result<RigidTransform> {
    Ok(icp_refine_trace(source, target, initial, max_iters, tol)?.transform)
}
