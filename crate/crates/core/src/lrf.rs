//! Local reference frames.
//!
//! A frame is the eigenbasis of the covariance of a point's neighborhood,
//! axes ordered by decreasing eigenvalue. Eigenvectors carry an arbitrary sign;
//! [`resolve_signs`] fixes it from the data so that, per axis, the side with the
//! larger first-order moment about the median becomes positive.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::spatial::KnnIndex;

/// Orthonormal frame anchored at a point. Rows of `axes` are the p, q, r axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lrf {
    pub origin: Point,
    pub axes: Matrix3<f64>,
    pub eigenvalues: Vector3<f64>,
}

/// Per-axis sign, each exactly +1.0 or -1.0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignState {
    pub flips: [f64; 3],
}

impl Default for SignState {
    fn default() -> Self {
        Self { flips: [1.0; 3] }
    }
}

/// Sign decision for one axis, with the moments that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisMoments {
    pub left: f64,
    pub right: f64,
}

impl AxisMoments {
    /// +1 when the right moment is strictly larger, else -1.
    pub fn sign(&self) -> f64 {
        if self.left < self.right {
            1.0
        } else {
            -1.0
        }
    }

    pub fn gap(&self) -> f64 {
        (self.right - self.left).abs()
    }
}

/// Covariance eigendecomposition of a neighborhood. Eigenvectors are returned
/// as rows, eigenvalues sorted descending.
pub fn local_pca(neighbors: &[Point]) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    if neighbors.len() < 3 {
        return Err(Error::TooFew {
            requested: 3,
            available: neighbors.len(),
        });
    }
    let mean = neighbors.iter().sum::<Point>() / neighbors.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in neighbors {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= neighbors.len() as f64;
    if !cov.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("neighborhood covariance is not finite".into()));
    }
    Ok(sorted_eigen(cov))
}

fn sorted_eigen(cov: Matrix3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut axes = Matrix3::zeros();
    let mut values = Vector3::zeros();
    for (row, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k).normalize();
        axes.set_row(row, &v.transpose());
        values[row] = eig.eigenvalues[k];
    }
    (axes, values)
}

/// First-order left/right moments about the median.
///
/// For even counts the median is the midpoint of the two middle values. It
/// negates exactly when the axis is flipped, which keeps the decision
/// equivariant; the lower middle element would not.
pub fn axis_moments(coords_1d: &[f64]) -> AxisMoments {
    if coords_1d.is_empty() {
        return AxisMoments { left: 0.0, right: 0.0 };
    }
    let mut sorted = coords_1d.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let mut left = 0.0;
    let mut right = 0.0;
    for &v in &sorted {
        if v < median {
            left += median - v;
        } else if v > median {
            right += v - median;
        }
    }
    AxisMoments { left, right }
}

pub fn disambiguate_axis(coords_1d: &[f64]) -> f64 {
    axis_moments(coords_1d).sign()
}

/// LRF of one point from its `k_lrf` nearest neighbors (the point included).
pub fn compute_lrf(cloud: &PointCloud, point_index: usize, k_lrf: usize, index: &KnnIndex) -> Result<Lrf> {
    if k_lrf < 3 {
        return Err(Error::InvalidInput(format!("k_lrf must be at least 3, got {k_lrf}")));
    }
    let origin = *cloud.point(point_index);
    let nbrs = index.knn_indices(&origin, k_lrf)?;
    let pts: Vec<Point> = nbrs
        .iter()
        .map(|&i| *index.points().get(i).expect("index from knn"))
        .collect();
    let (axes, eigenvalues) = local_pca(&pts)?;
    Ok(Lrf {
        origin,
        axes,
        eigenvalues,
    })
}

/// Local coordinates smaller than this fraction of the neighborhood radius are
/// round-off and are set to exactly zero. Coplanar neighborhoods then get the
/// same octant codes and moment ties in every pose.
pub const ROUNDOFF_REL: f64 = 1e-10;

/// `diag(signs) · axes · d` for each offset `d`, with round-off components zeroed.
pub fn project_offsets(lrf: &Lrf, signs: &SignState, offsets: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let radius = offsets.iter().map(|d| d.norm()).fold(0.0, f64::max);
    let tol = ROUNDOFF_REL * radius;
    offsets
        .iter()
        .map(|d| {
            let mut v = lrf.axes * d;
            for (c, s) in v.iter_mut().zip(signs.flips) {
                *c = if c.abs() <= tol { 0.0 } else { *c * s };
            }
            v
        })
        .collect()
}

/// Per-axis moments of `neighbors` expressed in the unsigned frame.
pub fn frame_moments(lrf: &Lrf, neighbors: &[Point]) -> [AxisMoments; 3] {
    let local = project_to_lrf(neighbors, lrf, &SignState::default());
    let mut out = [AxisMoments { left: 0.0, right: 0.0 }; 3];
    let mut column = Vec::with_capacity(local.len());
    for (axis, m) in out.iter_mut().enumerate() {
        column.clear();
        column.extend(local.iter().map(|v| v[axis]));
        *m = axis_moments(&column);
    }
    out
}

pub fn resolve_signs(lrf: &Lrf, neighbors: &[Point]) -> SignState {
    let m = frame_moments(lrf, neighbors);
    SignState {
        flips: [m[0].sign(), m[1].sign(), m[2].sign()],
    }
}

/// `diag(signs) · axes · (p - origin)` for each point.
pub fn project_to_lrf(points: &[Point], lrf: &Lrf, signs: &SignState) -> Vec<Vector3<f64>> {
    let offsets: Vec<Vector3<f64>> = points.iter().map(|p| p - lrf.origin).collect();
    project_offsets(lrf, signs, &offsets)
}

/// The frame with its sign state folded into the axes.
pub fn signed_axes(lrf: &Lrf, signs: &SignState) -> Matrix3<f64> {
    let mut a = lrf.axes;
    for (r, s) in signs.flips.iter().enumerate() {
        a.row_mut(r).scale_mut(*s);
    }
    a
}

/// Linearity, planarity, sphericity and eigen-entropy of a descending eigenvalue triple.
pub fn geometric_features(eigenvalues: &Vector3<f64>) -> Result<[f64; 4]> {
    let l = eigenvalues.map(|v| v.max(0.0));
    let sum = l.sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::Degenerate("eigenvalues are all zero".into()));
    }
    let e = l / sum;
    let entropy = -e.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>();
    Ok([(e[0] - e[1]) / e[0], (e[1] - e[2]) / e[0], e[2] / e[0], entropy])
}
