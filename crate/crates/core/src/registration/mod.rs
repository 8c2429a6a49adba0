//! Feature matching and rigid transform estimation.
//!
//! Convention: an estimated transform maps **target** points onto **source**
//! points, `source ≈ R · target + t`. The source is brought onto the target
//! with the inverse, `Rᵀ (source − t)`.

mod estimate;
mod icp;
mod matching;
mod metrics;
mod ransac;

pub use estimate::{alignment_error, estimate_rigid, estimate_transform};
pub use icp::{closest_point_mse, icp_refine, icp_refine_trace, IcpTrace};
pub use matching::{
    feature_distance_matrix, match_distances, match_features, CorrespondenceSet, MatchMode, MatchParams, RansacParams,
};
pub use metrics::{rotation_error, translation_error, wrap_deg, ErrorAggregate, RotationError};
pub use ransac::{ransac_estimate, RansacOutcome};

use std::fmt::Write as _;
use std::time::Instant;

use log::debug;

use crate::cloud::{align_inverse, normalize_unit_sphere, Point, PointCloud};
use crate::error::Result;
use crate::pipeline::{extract_features_scaled, RPointHopModel};
use crate::rng::derive_seed;
use crate::transform::{fmt_f64, write_transform_keys, EulerXyz, RigidTransform};

pub const DIRECTION_NOTE: &str = "transform maps target onto source: source = rotation * target + translation";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegisterParams {
    pub matching: MatchParams,
    pub icp_refine: bool,
    pub icp_max_iters: usize,
    /// ICP stops once an iteration lowers the closest-point MSE by less than this.
    pub icp_tol: f64,
    /// Seeds feature sampling and RANSAC.
    pub seed: u64,
}

impl Default for RegisterParams {
    fn default() -> Self {
        Self {
            matching: MatchParams::default(),
            icp_refine: false,
            icp_max_iters: 50,
            icp_tol: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationReport {
    pub transform: RigidTransform,
    pub source_points: usize,
    pub target_points: usize,
    /// Final-hop points carrying features, per cloud.
    pub source_feature_points: usize,
    pub target_feature_points: usize,
    /// Correspondences passed to estimation.
    pub pairs: usize,
    /// Pairs agreeing with the estimate (all pairs without RANSAC).
    pub inliers: usize,
    /// Mean `‖R f + t − g‖` over the inlier pairs, in input units.
    pub mean_inlier_residual: f64,
    /// RMS distance from the aligned source to the nearest target point, in input units.
    pub closest_point_rmse: f64,
    pub icp_iterations: usize,
    /// Seconds spent; kept out of [`RegistrationReport::to_text`] so reports are reproducible.
    pub runtime_secs: f64,
}

impl RegistrationReport {
    /// TOML text; loadable with [`RigidTransform::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {DIRECTION_NOTE}");
        write_transform_keys(&mut s, &self.transform);
        let e = EulerXyz::from_matrix(&self.transform.rotation);
        let _ = writeln!(
            s,
            "euler_xyz_deg = [{}, {}, {}]",
            fmt_f64(e.x),
            fmt_f64(e.y),
            fmt_f64(e.z)
        );
        let _ = writeln!(s, "source_points = {}", self.source_points);
        let _ = writeln!(s, "target_points = {}", self.target_points);
        let _ = writeln!(s, "source_feature_points = {}", self.source_feature_points);
        let _ = writeln!(s, "target_feature_points = {}", self.target_feature_points);
        let _ = writeln!(s, "pairs = {}", self.pairs);
        let _ = writeln!(s, "inliers = {}", self.inliers);
        let _ = writeln!(s, "mean_inlier_residual = {}", fmt_f64(self.mean_inlier_residual));
        let _ = writeln!(s, "closest_point_rmse = {}", fmt_f64(self.closest_point_rmse));
        let _ = writeln!(s, "icp_iterations = {}", self.icp_iterations);
        s
    }
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub transform: RigidTransform,
    /// The source moved onto the target.
    pub aligned_source: PointCloud,
    pub report: RegistrationReport,
}

/// Registers `source` to `target`: features, matching, estimation (optionally
/// RANSAC), optional ICP.
///
/// When the model normalizes its inputs, both clouds are mapped with the
/// target's unit-sphere similarity first and the result is mapped back, so the
/// transform is always in input coordinates. Clouds smaller than the model's
/// hop-1 count are processed with a proportionally scaled schedule.
pub fn register(
    model: &RPointHopModel,
    source: &PointCloud,
    target: &PointCloud,
    params: &RegisterParams,
) -> Result<Registration> {
    let start = Instant::now();
    let (center, scale) = if model.config.normalize {
        let n = normalize_unit_sphere(target);
        (n.centroid, n.scale)
    } else {
        (Point::zeros(), 1.0)
    };
    let src = source.map_coords(|p| (p - center) / scale);
    let tgt = target.map_coords(|p| (p - center) / scale);

    let feature_seed = derive_seed(params.seed, 0);
    let ft = extract_features_scaled(model, &tgt, feature_seed)?;
    let fs = extract_features_scaled(model, &src, feature_seed)?;
    let matches = match_features(&ft, &fs, &params.matching)?;

    let (mut tf, inlier_rows) = if params.matching.use_ransac {
        let ransac = RansacParams {
            seed: derive_seed(params.seed, 1),
            ..params.matching.ransac
        };
        let out = ransac_estimate(&matches, &ransac)?;
        (out.transform, out.inliers)
    } else {
        (estimate_transform(&matches)?, (0..matches.len()).collect())
    };

    let mut icp_iterations = 0;
    if params.icp_refine {
        let trace = icp_refine_trace(&src, &tgt, &tf, params.icp_max_iters, params.icp_tol)?;
        debug!("icp: {} iterations, mse {:?}", trace.iterations, trace.mse.last());
        icp_iterations = trace.iterations;
        tf = trace.transform;
    }

    let inliers = matches.subset(&inlier_rows);
    let mean_inlier_residual = inliers
        .coords_target
        .iter()
        .zip(&inliers.coords_source)
        .map(|(f, g)| (tf.apply(f) - g).norm())
        .sum::<f64>()
        / inliers.len().max(1) as f64
        * scale;
    let closest_point_rmse = closest_point_mse(&src, &tgt, &tf)?.sqrt() * scale;

    // With p' = (p - c) / s on both sides, g' = R f' + t' becomes g = R f + (s t' + c - R c).
    let transform = RigidTransform {
        rotation: tf.rotation,
        translation: tf.translation * scale + center - tf.rotation * center,
    };
    let report = RegistrationReport {
        transform,
        source_points: source.len(),
        target_points: target.len(),
        source_feature_points: fs.len(),
        target_feature_points: ft.len(),
        pairs: matches.len(),
        inliers: inlier_rows.len(),
        mean_inlier_residual,
        closest_point_rmse,
        icp_iterations,
        runtime_secs: start.elapsed().as_secs_f64(),
    };
    Ok(Registration {
        transform,
        aligned_source: align_inverse(source, &transform),
        report,
    })
}
