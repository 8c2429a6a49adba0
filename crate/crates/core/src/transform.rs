//! Rigid transforms, Euler-angle conventions and the transform text file.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::Deserialize;

use crate::error::{Error, Result};

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOL: f64 = 1e-9;

/// A proper rigid motion `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, rejecting matrices that are not in SO(3).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let tf = Self { rotation, translation };
        tf.validate()?;
        Ok(tf)
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Result<Self> {
        Self::new(rotation, Vector3::zeros())
    }

    /// Largest entry of `RᵀR - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }

    pub fn validate(&self) -> Result<()> {
        if !self
            .rotation
            .iter()
            .chain(self.translation.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidInput("transform has non-finite entries".into()));
        }
        let ortho = self.orthonormality_error();
        let det = self.rotation.determinant();
        if ortho >= ROTATION_TOL || (det - 1.0).abs() >= ROTATION_TOL {
            return Err(Error::InvalidInput(format!(
                "rotation is not in SO(3): |RᵀR - I|max = {ortho:e}, det = {det}"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `Rᵀ (p - t)`.
    #[inline]
    pub fn apply_inverse(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Angle of the relative rotation `self.rotation * other.rotationᵀ`, in degrees.
    pub fn angular_distance_deg(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation * other.rotation.transpose();
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos().to_degrees()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        write_transform_keys(&mut s, self);
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Parses the `rotation = [...]` / `translation = [...]` text format. Extra keys are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            rotation: Vec<f64>,
            translation: Vec<f64>,
        }
        let raw: Raw = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if raw.rotation.len() != 9 {
            return Err(Error::DimensionMismatch {
                expected: 9,
                got: raw.rotation.len(),
            });
        }
        if raw.translation.len() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: raw.translation.len(),
            });
        }
        Self::new(
            Matrix3::from_row_slice(&raw.rotation),
            Vector3::from_column_slice(&raw.translation),
        )
    }
}

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn fmt_list<'a>(values: impl IntoIterator<Item = &'a f64>) -> String {
    let items: Vec<String> = values.into_iter().map(|v| fmt_f64(*v)).collect();
    format!("[{}]", items.join(", "))
}

pub(crate) fn write_transform_keys(out: &mut String, tf: &RigidTransform) {
    let rows: Vec<f64> = (0..3)
        .flat_map(|r| (0..3).map(move |c| (r, c)))
        .map(|(r, c)| tf.rotation[(r, c)])
        .collect();
    let _ = writeln!(out, "rotation = {}", fmt_list(&rows));
    let _ = writeln!(out, "translation = {}", fmt_list(tf.translation.iter()));
}

pub fn rot_x(deg: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), deg.to_radians()).into_inner()
}

pub fn rot_y(deg: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), deg.to_radians()).into_inner()
}

pub fn rot_z(deg: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), deg.to_radians()).into_inner()
}

/// Euler angles in degrees for the composition `R = Rz(z) · Ry(y) · Rx(x)`:
/// the rotation about X acts first, then Y, then Z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerXyz {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EulerXyz {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        rot_z(self.z) * rot_y(self.y) * rot_x(self.x)
    }

    /// Extracts angles with pitch (`y`) in [-90°, 90°].
    pub fn from_matrix(r: &Matrix3<f64>) -> Self {
        let sy = (-r[(2, 0)]).clamp(-1.0, 1.0);
        let y = sy.asin();
        let x = r[(2, 1)].atan2(r[(2, 2)]);
        let z = r[(1, 0)].atan2(r[(0, 0)]);
        Self {
            x: x.to_degrees(),
            y: y.to_degrees(),
            z: z.to_degrees(),
        }
    }

    /// True when pitch is within `1e-9` degrees of ±90°, where roll and yaw are not separable.
    pub fn is_gimbal_locked(&self) -> bool {
        (self.y.abs() - 90.0).abs() < 1e-9
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}
