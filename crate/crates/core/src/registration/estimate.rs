use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::matching::CorrespondenceSet;
use crate::cloud::Point;
use crate::error::{Error, Result};
use crate::transform::RigidTransform;

/// Spread below this fraction of the dominant direction counts as collinear.
const COLLINEAR_RATIO: f64 = 1e-12;

fn mean(points: &[Point]) -> Point {
    points.iter().sum::<Point>() / points.len() as f64
}

/// Least-squares rigid motion with `g_i ≈ R f_i + t`.
///
/// SVD of `H = Σ (f_i − f̄)(g_i − ḡ)ᵀ = U S Vᵀ` gives `R = V diag(1, 1, det(V Uᵀ)) Uᵀ`,
/// which is a proper rotation even when the best orthogonal map is a reflection.
pub fn estimate_rigid(f: &[Point], g: &[Point]) -> Result<RigidTransform> {
    if f.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: f.len(),
            got: g.len(),
        });
    }
    if f.len() < 3 {
        return Err(Error::TooFew {
            requested: 3,
            available: f.len(),
        });
    }
    let fm = mean(f);
    let gm = mean(g);
    let mut h = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for (a, b) in f.iter().zip(g) {
        let da = a - fm;
        h += da * (b - gm).transpose();
        scatter += da * da.transpose();
    }
    let ev = SymmetricEigen::new(scatter).eigenvalues;
    let mut ev = [ev[0], ev[1], ev[2]];
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= COLLINEAR_RATIO * ev[0] {
        return Err(Error::Degenerate("correspondence points are collinear".into()));
    }
    if !h.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("non-finite correspondence coordinates".into()));
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested Vᵀ").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let t = gm - r * fm;
    Ok(RigidTransform {
        rotation: r,
        translation: t,
    })
}

/// Transform mapping the target points of the set onto their source points.
pub fn estimate_transform(c: &CorrespondenceSet) -> Result<RigidTransform> {
    estimate_rigid(&c.coords_target, &c.coords_source)
}

/// `Σ ‖R f_i + t − g_i‖²`.
pub fn alignment_error(tf: &RigidTransform, f: &[Point], g: &[Point]) -> f64 {
    f.iter().zip(g).map(|(a, b)| (tf.apply(a) - b).norm_squared()).sum()
}
