use nalgebra::{Matrix3, Vector3};

use crate::transform::EulerXyz;

/// Signed per-axis Euler differences, in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationError {
    pub per_axis: [f64; 3],
    /// Either rotation sits at gimbal lock, where the per-axis split is arbitrary.
    pub gimbal_lock: bool,
}

/// Wraps an angle difference into (−180, 180].
pub fn wrap_deg(d: f64) -> f64 {
    let w = d.rem_euclid(360.0);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

pub fn rotation_error(pred: &Matrix3<f64>, gt: &Matrix3<f64>) -> RotationError {
    let p = EulerXyz::from_matrix(pred);
    let g = EulerXyz::from_matrix(gt);
    let (pa, ga) = (p.as_array(), g.as_array());
    RotationError {
        per_axis: [
            wrap_deg(pa[0] - ga[0]),
            wrap_deg(pa[1] - ga[1]),
            wrap_deg(pa[2] - ga[2]),
        ],
        gimbal_lock: p.is_gimbal_locked() || g.is_gimbal_locked(),
    }
}

pub fn translation_error(pred: &Vector3<f64>, gt: &Vector3<f64>) -> [f64; 3] {
    let d = pred - gt;
    [d.x, d.y, d.z]
}

/// MSE, RMSE and MAE of a pooled set of signed errors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorAggregate {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub count: usize,
}

impl ErrorAggregate {
    pub fn from_values<'a>(values: impl IntoIterator<Item = &'a f64>) -> Self {
        let (mut sq, mut abs, mut n) = (0.0, 0.0, 0usize);
        for v in values {
            sq += v * v;
            abs += v.abs();
            n += 1;
        }
        if n == 0 {
            return Self::default();
        }
        let mse = sq / n as f64;
        Self {
            mse,
            rmse: mse.sqrt(),
            mae: abs / n as f64,
            count: n,
        }
    }
}
