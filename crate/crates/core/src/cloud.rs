//! The point-cloud data model and the basic operations on it.

use log::warn;
use nalgebra::Vector3;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::transform::RigidTransform;

pub type Point = Vector3<f64>;

/// N points with optional per-point auxiliary attributes (normals, ...).
///
/// `aux` is stored row-major with a fixed width per point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<Point>,
    aux: Option<Aux>,
}

#[derive(Debug, Clone, PartialEq)]
struct Aux {
    width: usize,
    data: Vec<f64>,
}

impl PointCloud {
    pub fn new(coords: Vec<Point>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput(
                "point cloud must contain at least one point".into(),
            ));
        }
        if let Some(i) = coords.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInput(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { coords, aux: None })
    }

    /// Attaches `width` auxiliary values per point, given row-major.
    pub fn with_aux(mut self, width: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidInput("aux width must be positive".into()));
        }
        if data.len() != width * self.coords.len() {
            return Err(Error::DimensionMismatch {
                expected: width * self.coords.len(),
                got: data.len(),
            });
        }
        self.aux = Some(Aux { width, data });
        Ok(self)
    }

    pub fn from_slice(points: &[[f64; 3]]) -> Result<Self> {
        Self::new(points.iter().map(|p| Point::new(p[0], p[1], p[2])).collect())
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.coords[i]
    }

    pub fn aux_width(&self) -> usize {
        self.aux.as_ref().map_or(0, |a| a.width)
    }

    pub fn aux_row(&self, i: usize) -> Option<&[f64]> {
        self.aux.as_ref().map(|a| &a.data[i * a.width..(i + 1) * a.width])
    }

    pub fn centroid(&self) -> Point {
        self.coords.iter().sum::<Point>() / self.coords.len() as f64
    }

    /// Keeps the listed points (and their aux rows) in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidInput("selection is empty".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidInput(format!(
                "index {bad} out of range for {} points",
                self.len()
            )));
        }
        let coords = indices.iter().map(|&i| self.coords[i]).collect();
        let aux = self.aux.as_ref().map(|a| Aux {
            width: a.width,
            data: indices
                .iter()
                .flat_map(|&i| a.data[i * a.width..(i + 1) * a.width].iter().copied())
                .collect(),
        });
        Ok(Self { coords, aux })
    }

    /// Same aux, new coordinates.
    pub(crate) fn map_coords(&self, f: impl Fn(&Point) -> Point) -> Self {
        Self {
            coords: self.coords.iter().map(f).collect(),
            aux: self.aux.clone(),
        }
    }
}

/// Result of [`normalize_unit_sphere`]; `p_original = p_normalized * scale + centroid`.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub cloud: PointCloud,
    pub centroid: Point,
    pub scale: f64,
}

/// Centers the cloud at the origin and scales it so the farthest point has norm 1.
///
/// A cloud whose points all coincide gets scale 1 (with a warning when N > 1).
pub fn normalize_unit_sphere(cloud: &PointCloud) -> Normalized {
    let centroid = cloud.centroid();
    let mut scale = cloud
        .coords()
        .iter()
        .map(|p| (p - centroid).norm())
        .fold(0.0_f64, f64::max);
    if scale == 0.0 {
        if cloud.len() > 1 {
            warn!("all {} points coincide; normalizing with scale 1", cloud.len());
        }
        scale = 1.0;
    }
    Normalized {
        cloud: cloud.map_coords(|p| (p - centroid) / scale),
        centroid,
        scale,
    }
}

/// `m` distinct indices drawn by a partial Fisher-Yates shuffle, returned in ascending order.
pub fn random_sample_indices(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    if m > n {
        return Err(Error::TooFew {
            requested: m,
            available: n,
        });
    }
    let mut rng = rng_from_seed(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(m);
    idx.sort_unstable();
    Ok(idx)
}

pub fn random_sample(cloud: &PointCloud, m: usize, seed: u64) -> Result<PointCloud> {
    cloud.select(&random_sample_indices(cloud.len(), m, seed)?)
}

/// `R·p + t` for every point.
pub fn apply_transform(cloud: &PointCloud, tf: &RigidTransform) -> PointCloud {
    cloud.map_coords(|p| tf.apply(p))
}

/// `Rᵀ(p - t)` for every point: undoes [`apply_transform`].
pub fn align_inverse(cloud: &PointCloud, tf: &RigidTransform) -> PointCloud {
    cloud.map_coords(|p| tf.apply_inverse(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::{rot_z, EulerXyz};

    fn max_diff(a: &PointCloud, b: &PointCloud) -> f64 {
        a.coords()
            .iter()
            .zip(b.coords())
            .map(|(p, q)| (p - q).amax())
            .fold(0.0, f64::max)
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::from_slice(&[[0.0, f64::NAN, 0.0]]).is_err());
        let c = PointCloud::from_slice(&[[0.0; 3], [1.0; 3]]).unwrap();
        assert!(c.clone().with_aux(3, vec![0.0; 5]).is_err());
        assert_eq!(c.with_aux(2, vec![0.0; 4]).unwrap().aux_width(), 2);
    }

    #[test]
    fn normalize_two_points() {
        let c = PointCloud::from_slice(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        let n = normalize_unit_sphere(&c);
        assert_eq!(n.centroid, Point::new(1.0, 0.0, 0.0));
        assert_eq!(n.scale, 1.0);
        assert_eq!(
            n.cloud.coords(),
            &[Point::new(-1.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0)]
        );
    }

    #[test]
    fn normalize_single_point_and_coincident() {
        let c = PointCloud::from_slice(&[[5.0, 5.0, 5.0]]).unwrap();
        let n = normalize_unit_sphere(&c);
        assert_eq!(n.cloud.point(0), &Point::zeros());
        assert_eq!(n.scale, 1.0);
        let c = PointCloud::from_slice(&[[1.0, 2.0, 3.0]; 4]).unwrap();
        let n = normalize_unit_sphere(&c);
        assert_eq!(n.scale, 1.0);
        assert!(n.cloud.coords().iter().all(|p| *p == Point::zeros()));
    }

    #[test]
    fn normalize_is_idempotent() {
        let c =
            PointCloud::from_slice(&[[0.3, 1.0, -2.0], [4.0, 0.5, 0.0], [-1.0, 2.0, 2.0], [0.0, 0.0, 7.0]]).unwrap();
        let a = normalize_unit_sphere(&c);
        let max_norm = a.cloud.coords().iter().map(|p| p.norm()).fold(0.0, f64::max);
        assert!((max_norm - 1.0).abs() < 1e-9);
        assert!(a.cloud.centroid().amax() < 1e-9);
        let b = normalize_unit_sphere(&a.cloud);
        assert!(max_diff(&a.cloud, &b.cloud) < 1e-9);
    }

    #[test]
    fn random_sample_rules() {
        let idx = random_sample_indices(10, 10, 3).unwrap();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
        assert_eq!(
            random_sample_indices(100, 7, 9).unwrap(),
            random_sample_indices(100, 7, 9).unwrap()
        );
        assert!(random_sample_indices(5, 6, 0).is_err());
        assert!(random_sample_indices(5, 0, 0).is_err());
    }

    #[test]
    fn transform_and_inverse() {
        let c = PointCloud::from_slice(&[[1.0, 0.0, 0.0]]).unwrap();
        let tf = RigidTransform::from_rotation(rot_z(90.0)).unwrap();
        assert!((apply_transform(&c, &tf).point(0) - Point::new(0.0, 1.0, 0.0)).amax() < 1e-12);

        let tf = RigidTransform::new(rot_z(90.0), Point::new(1.0, 2.0, 3.0)).unwrap();
        let moved = PointCloud::from_slice(&[[1.0, 3.0, 3.0]]).unwrap();
        assert!((align_inverse(&moved, &tf).point(0) - Point::new(1.0, 0.0, 0.0)).amax() < 1e-12);

        let c = PointCloud::from_slice(&[[0.1, 0.2, 0.3], [-1.0, 4.0, 2.0]]).unwrap();
        let tf = RigidTransform::new(
            EulerXyz::new(33.0, -12.0, 140.0).to_matrix(),
            Point::new(0.4, -0.2, 9.0),
        )
        .unwrap();
        assert!(max_diff(&align_inverse(&apply_transform(&c, &tf), &tf), &c) < 1e-9);
        assert_eq!(apply_transform(&c, &RigidTransform::identity()), c);
    }
}
