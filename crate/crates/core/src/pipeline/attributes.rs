//! Octant pooling in a point's local reference frame.
//!
//! Octants are numbered by the signs of the local coordinates, `x` most
//! significant and non-negative first: `+++, ++-, +-+, +--, -++, -+-, --+, ---`.

use nalgebra::Vector3;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::lrf::{self, AxisMoments, Lrf, SignState};
use crate::spatial::KnnIndex;

pub const NUM_OCTANTS: usize = 8;
pub const HOP1_WIDTH: usize = 3 * NUM_OCTANTS;

#[inline]
pub fn octant_index(v: &Vector3<f64>) -> usize {
    (usize::from(v.x < 0.0) << 2) | (usize::from(v.y < 0.0) << 1) | usize::from(v.z < 0.0)
}

/// Mean position per octant, concatenated; empty octants give zeros.
pub fn octant_means_3d(local: &[Vector3<f64>]) -> [f64; HOP1_WIDTH] {
    let mut sums = [Vector3::zeros(); NUM_OCTANTS];
    let mut counts = [0usize; NUM_OCTANTS];
    for v in local {
        let o = octant_index(v);
        sums[o] += v;
        counts[o] += 1;
    }
    let mut out = [0.0; HOP1_WIDTH];
    for o in 0..NUM_OCTANTS {
        if counts[o] > 0 {
            let m = sums[o] / counts[o] as f64;
            out[3 * o..3 * o + 3].copy_from_slice(m.as_slice());
        }
    }
    out
}

/// Mean of `values` per octant code; empty octants give zero.
pub fn octant_means_coded(codes: &[u8], values: impl IntoIterator<Item = f64>) -> [f64; NUM_OCTANTS] {
    let mut sums = [0.0; NUM_OCTANTS];
    let mut counts = [0usize; NUM_OCTANTS];
    for (&c, v) in codes.iter().zip(values) {
        sums[c as usize] += v;
        counts[c as usize] += 1;
    }
    let mut out = [0.0; NUM_OCTANTS];
    for o in 0..NUM_OCTANTS {
        if counts[o] > 0 {
            out[o] = sums[o] / counts[o] as f64;
        }
    }
    out
}

/// 8-D attribute of one channel: per-octant mean of the neighbors' channel values.
/// `neighbor_offsets` are neighbor positions minus the frame origin.
pub fn build_later_hop_attributes(
    channel_values: &[f64],
    lrf: &Lrf,
    signs: &SignState,
    neighbor_offsets: &[Vector3<f64>],
) -> Result<[f64; NUM_OCTANTS]> {
    if neighbor_offsets.is_empty() {
        return Err(Error::InvalidInput("at least one neighbor is required".into()));
    }
    if channel_values.len() != neighbor_offsets.len() {
        return Err(Error::DimensionMismatch {
            expected: neighbor_offsets.len(),
            got: channel_values.len(),
        });
    }
    let codes: Vec<u8> = lrf::project_offsets(lrf, signs, neighbor_offsets)
        .iter()
        .map(|v| octant_index(v) as u8)
        .collect();
    Ok(octant_means_coded(&codes, channel_values.iter().copied()))
}

/// Hop-1 attribute of one point together with the sign decisions behind it.
#[derive(Debug, Clone)]
pub struct Hop1Attribute {
    pub values: [f64; HOP1_WIDTH],
    pub signs: SignState,
    pub moments: [AxisMoments; 3],
}

/// Projects the `k` nearest neighbors of a point into its sign-resolved frame
/// and pools their coordinates per octant.
pub fn build_hop1_attributes(
    cloud: &PointCloud,
    index: &KnnIndex,
    point_index: usize,
    lrf: &Lrf,
    k: usize,
) -> Result<Hop1Attribute> {
    if k < crate::pipeline::MIN_HOP_NEIGHBORS {
        return Err(Error::InvalidInput(format!(
            "hop-1 neighborhood must hold at least 8 points, got {k}"
        )));
    }
    let nbrs = index.knn_indices(cloud.point(point_index), k)?;
    let pts: Vec<_> = nbrs.iter().map(|&i| *cloud.point(i)).collect();
    let moments = lrf::frame_moments(lrf, &pts);
    let signs = SignState {
        flips: [moments[0].sign(), moments[1].sign(), moments[2].sign()],
    };
    let local = lrf::project_to_lrf(&pts, lrf, &signs);
    Ok(Hop1Attribute {
        values: octant_means_3d(&local),
        signs,
        moments,
    })
}

/// Optional hop-1 extension: the cloud's own aux row (if any) followed by the
/// four eigenvalue features of the point's frame.
pub fn aux_extension(cloud: &PointCloud, point_index: usize, lrf: &Lrf) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = cloud.aux_row(point_index).map(<[f64]>::to_vec).unwrap_or_default();
    let l = lrf.eigenvalues.map(|v| v.max(0.0));
    out.extend(lrf::geometric_features(&l)?);
    Ok(out)
}
