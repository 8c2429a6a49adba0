//! Synthetic registration experiments.
//!
//! Each trial takes a test cloud as the target, moves a copy by a random rigid
//! motion to make the source, optionally crops and perturbs it, registers the
//! pair and scores the estimate against the known motion. All randomness of
//! trial `i` comes from a seed derived from the spec seed and `i`, so changing
//! one flag (for example the ratio test) replays exactly the same trials.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::cloud::{apply_transform, PointCloud};
use crate::error::{Error, Result};
use crate::pipeline::RPointHopModel;
use crate::registration::{
    icp_refine_trace, register, rotation_error, translation_error, ErrorAggregate, MatchParams, RegisterParams,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::spatial::build_index;
use crate::transform::{fmt_f64, EulerXyz, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Feature matching and closed-form estimation, with the spec's options.
    RPointHop,
    /// Plain ICP from the identity.
    IcpOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentSpec {
    /// Each Euler angle is drawn uniformly from `[0, max_angle_deg]`.
    pub max_angle_deg: f64,
    /// Each translation component is drawn uniformly from `[-range, range]`.
    pub translation_range: f64,
    pub noise_std: f64,
    /// Fraction of points kept in the source (1 keeps the full cloud).
    pub partial_fraction: f64,
    /// Crop the target too, with its own anchor.
    pub both_partial: bool,
    pub trials: usize,
    pub seed: u64,
    /// Correspondences kept by feature distance, then by ratio.
    pub m1: usize,
    pub m2: usize,
    pub use_ratio_test: bool,
    pub use_ransac: bool,
    pub icp_refine: bool,
    pub method: Method,
    pub icp_max_iters: usize,
    /// Randomly reorder the source points, so nothing about the point order
    /// is shared with the target.
    pub shuffle_source: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            max_angle_deg: 45.0,
            translation_range: 0.5,
            noise_std: 0.0,
            partial_fraction: 1.0,
            both_partial: false,
            trials: 50,
            seed: 0,
            m1: 256,
            m2: 128,
            use_ratio_test: true,
            use_ransac: false,
            icp_refine: false,
            method: Method::RPointHop,
            icp_max_iters: 50,
            shuffle_source: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=180.0).contains(&self.max_angle_deg) {
            return Err(Error::InvalidInput(format!(
                "max angle must lie in [0, 180], got {}",
                self.max_angle_deg
            )));
        }
        if !(self.translation_range >= 0.0 && self.translation_range.is_finite()) {
            return Err(Error::InvalidInput(
                "translation range must be finite and non-negative".into(),
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidInput("noise std must be finite and non-negative".into()));
        }
        if !(self.partial_fraction > 0.0 && self.partial_fraction <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "partial fraction must lie in (0, 1], got {}",
                self.partial_fraction
            )));
        }
        if self.m2 == 0 || self.m2 > self.m1 {
            return Err(Error::InvalidInput(format!(
                "need 0 < m2 <= m1, got m1 = {}, m2 = {}",
                self.m1, self.m2
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("at least one trial is required".into()));
        }
        Ok(())
    }

    fn register_params(&self, seed: u64) -> RegisterParams {
        RegisterParams {
            matching: MatchParams {
                m1: self.m1,
                m2: self.m2,
                ratio_test: self.use_ratio_test,
                use_ransac: self.use_ransac,
                ..MatchParams::default()
            },
            icp_refine: self.icp_refine,
            icp_max_iters: self.icp_max_iters,
            seed,
            ..RegisterParams::default()
        }
    }
}

/// Ground-truth motion for one trial, with the angles it was built from.
///
/// Angles are `u · max_angle_deg` for a fixed uniform `u` per trial seed, so
/// sweeps over the maximum angle stay paired.
pub fn sample_rigid_transform(spec: &ExperimentSpec, trial_seed: u64) -> (RigidTransform, EulerXyz) {
    let mut rng = rng_from_seed(trial_seed);
    let mut angle = || rng.random::<f64>() * spec.max_angle_deg;
    let euler = EulerXyz::new(angle(), angle(), angle());
    let r = spec.translation_range;
    let mut shift = || if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
    let t = nalgebra::Vector3::new(shift(), shift(), shift());
    (
        RigidTransform {
            rotation: euler.to_matrix(),
            translation: t,
        },
        euler,
    )
}

/// The `⌊fraction · N⌋` points nearest to a random anchor (anchor included),
/// in their original order.
pub fn make_partial(cloud: &PointCloud, fraction: f64, seed: u64) -> Result<PointCloud> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "partial fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let m = (fraction * cloud.len() as f64).floor() as usize;
    if m < 1 {
        return Err(Error::TooFew {
            requested: 1,
            available: 0,
        });
    }
    if m == cloud.len() {
        return Ok(cloud.clone());
    }
    let anchor = rng_from_seed(seed).random_range(0..cloud.len());
    let index = build_index(cloud);
    let mut keep = index.knn_indices(cloud.point(anchor), m)?;
    keep.sort_unstable();
    cloud.select(&keep)
}

/// Adds i.i.d. zero-mean Gaussian noise to every coordinate.
pub fn add_noise(cloud: &PointCloud, std: f64, seed: u64) -> Result<PointCloud> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise std must be finite and non-negative, got {std}"
        )));
    }
    if std == 0.0 {
        return Ok(cloud.clone());
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = rng_from_seed(seed);
    let noisy = cloud
        .coords()
        .iter()
        .map(|p| p + nalgebra::Vector3::from_fn(|_, _| normal.sample(&mut rng)))
        .collect();
    let mut out = PointCloud::new(noisy)?;
    if let Some(w) = (cloud.aux_width() > 0).then_some(cloud.aux_width()) {
        let aux = (0..cloud.len())
            .flat_map(|i| cloud.aux_row(i).unwrap().to_vec())
            .collect();
        out = out.with_aux(w, aux)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub cloud_index: usize,
    pub ground_truth: RigidTransform,
    pub gt_euler: EulerXyz,
    pub outcome: std::result::Result<TrialScore, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialScore {
    pub estimate: RigidTransform,
    /// Signed per-axis Euler differences, degrees.
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
    pub gimbal_lock: bool,
    /// Geodesic angle between estimate and ground truth, degrees.
    pub angular_error: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub spec: ExperimentSpec,
    pub trials: Vec<TrialResult>,
    /// Pooled over all axes of all successful trials.
    pub rotation: ErrorAggregate,
    pub translation: ErrorAggregate,
    pub runtime_secs: f64,
}

impl BenchReport {
    pub fn failed(&self) -> usize {
        self.trials.iter().filter(|t| t.outcome.is_err()).count()
    }

    pub fn succeeded(&self) -> impl Iterator<Item = &TrialScore> {
        self.trials.iter().filter_map(|t| t.outcome.as_ref().ok())
    }

    /// Mean absolute per-axis rotation error per trial, `None` for failed trials.
    /// Indexed by trial, so two reports of the same spec pair up row by row.
    pub fn rotation_mae_by_trial(&self) -> Vec<Option<f64>> {
        self.trials
            .iter()
            .map(|t| {
                t.outcome
                    .as_ref()
                    .ok()
                    .map(|s| s.rotation.iter().map(|v| v.abs()).sum::<f64>() / 3.0)
            })
            .collect()
    }

    /// Tab-separated table, one row per trial.
    pub fn table(&self) -> String {
        let mut s = String::from(
            "trial\tcloud\tgt_x_deg\tgt_y_deg\tgt_z_deg\terr_rx_deg\terr_ry_deg\terr_rz_deg\terr_tx\terr_ty\terr_tz\tangular_deg\tresidual\tstatus\n",
        );
        for t in &self.trials {
            let _ = write!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                t.trial,
                t.cloud_index,
                fmt_f64(t.gt_euler.x),
                fmt_f64(t.gt_euler.y),
                fmt_f64(t.gt_euler.z)
            );
            match &t.outcome {
                Ok(sc) => {
                    for v in sc.rotation.iter().chain(&sc.translation) {
                        let _ = write!(s, "\t{}", fmt_f64(*v));
                    }
                    let status = if sc.gimbal_lock { "ok-gimbal-lock" } else { "ok" };
                    let _ = writeln!(s, "\t{}\t{}\t{status}", fmt_f64(sc.angular_error), fmt_f64(sc.residual));
                }
                Err(e) => {
                    let _ = writeln!(s, "{}\tfailed: {}", "\tnan".repeat(8), e.replace(['\t', '\n'], " "));
                }
            }
        }
        s
    }

    /// Six-column aggregate block, labeled.
    pub fn aggregate_block(&self, label: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# aggregate: {label}");
        let _ = writeln!(
            s,
            "# trials: {} ok, {} failed",
            self.trials.len() - self.failed(),
            self.failed()
        );
        let _ = writeln!(s, "MSE(R)\tRMSE(R)\tMAE(R)\tMSE(t)\tRMSE(t)\tMAE(t)");
        let (r, t) = (&self.rotation, &self.translation);
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            fmt_f64(r.mse),
            fmt_f64(r.rmse),
            fmt_f64(r.mae),
            fmt_f64(t.mse),
            fmt_f64(t.rmse),
            fmt_f64(t.mae)
        );
        s
    }

    /// Spec header, trial table and aggregate block. Runtime is left out so
    /// identical runs give identical text.
    pub fn to_text(&self, label: &str) -> String {
        let sp = &self.spec;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# method={:?} max_angle_deg={} translation_range={} noise_std={} partial={} both_partial={} trials={} seed={} m1={} m2={} ratio_test={} ransac={} icp_refine={} shuffle_source={}",
            sp.method,
            sp.max_angle_deg,
            sp.translation_range,
            sp.noise_std,
            sp.partial_fraction,
            sp.both_partial,
            sp.trials,
            sp.seed,
            sp.m1,
            sp.m2,
            sp.use_ratio_test,
            sp.use_ransac,
            sp.icp_refine,
            sp.shuffle_source
        );
        let _ = writeln!(
            s,
            "# rotation errors are intrinsic X-Y-Z Euler differences in degrees, pooled over axes and trials"
        );
        let _ = writeln!(
            s,
            "# desk-scale model: errors are not comparable to models trained on a full benchmark corpus"
        );
        s.push_str(&self.table());
        s.push_str(&self.aggregate_block(label));
        s
    }
}

fn score(estimate: RigidTransform, gt: &RigidTransform, residual: f64) -> TrialScore {
    let re = rotation_error(&estimate.rotation, &gt.rotation);
    TrialScore {
        estimate,
        rotation: re.per_axis,
        translation: translation_error(&estimate.translation, &gt.translation),
        gimbal_lock: re.gimbal_lock,
        angular_error: estimate.angular_distance_deg(gt),
        residual,
    }
}

/// Scores a transform against the ground truth of a trial.
pub fn score_transform(estimate: &RigidTransform, gt: &RigidTransform) -> TrialScore {
    score(*estimate, gt, 0.0)
}

fn run_trial(model: &RPointHopModel, clouds: &[PointCloud], spec: &ExperimentSpec, trial: usize) -> TrialResult {
    let ts = derive_seed(spec.seed, trial as u64);
    let cloud_index = trial % clouds.len();
    let (gt, gt_euler) = sample_rigid_transform(spec, derive_seed(ts, 0));
    let outcome = (|| -> Result<TrialScore> {
        let mut target = clouds[cloud_index].clone();
        let mut source = apply_transform(&target, &gt);
        if spec.partial_fraction < 1.0 {
            source = make_partial(&source, spec.partial_fraction, derive_seed(ts, 1))?;
            if spec.both_partial {
                target = make_partial(&target, spec.partial_fraction, derive_seed(ts, 2))?;
            }
        }
        source = add_noise(&source, spec.noise_std, derive_seed(ts, 3))?;
        if spec.shuffle_source {
            let mut order: Vec<usize> = (0..source.len()).collect();
            order.shuffle(&mut rng_from_seed(derive_seed(ts, 5)));
            source = source.select(&order)?;
        }
        match spec.method {
            Method::RPointHop => {
                let reg = register(model, &source, &target, &spec.register_params(derive_seed(ts, 4)))?;
                Ok(score(reg.transform, &gt, reg.report.closest_point_rmse))
            }
            Method::IcpOnly => {
                let trace = icp_refine_trace(&source, &target, &RigidTransform::identity(), spec.icp_max_iters, 1e-10)?;
                let residual = trace.mse.last().copied().unwrap_or(f64::NAN).sqrt();
                Ok(score(trace.transform, &gt, residual))
            }
        }
    })();
    TrialResult {
        trial,
        cloud_index,
        ground_truth: gt,
        gt_euler,
        outcome: outcome.map_err(|e| e.to_string()),
    }
}

/// Runs `spec.trials` trials over `clouds` (trial `i` uses cloud `i mod len`).
/// Failed trials are kept in the report and left out of the aggregates.
pub fn run_benchmark(model: &RPointHopModel, clouds: &[PointCloud], spec: &ExperimentSpec) -> Result<BenchReport> {
    spec.validate()?;
    if clouds.is_empty() {
        return Err(Error::InvalidInput("no test clouds".into()));
    }
    let start = Instant::now();
    let trials: Vec<TrialResult> = (0..spec.trials)
        .into_par_iter()
        .map(|i| run_trial(model, clouds, spec, i))
        .collect();
    let ok: Vec<&TrialScore> = trials.iter().filter_map(|t| t.outcome.as_ref().ok()).collect();
    let rotation = ErrorAggregate::from_values(ok.iter().flat_map(|s| s.rotation.iter()));
    let translation = ErrorAggregate::from_values(ok.iter().flat_map(|s| s.translation.iter()));
    Ok(BenchReport {
        spec: *spec,
        trials,
        rotation,
        translation,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}
