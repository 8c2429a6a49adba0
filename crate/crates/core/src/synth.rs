//! Random asymmetric surface shapes for training corpora and tests.
//!
//! Every shape is sampled densely, random-sampled down to the requested size
//! and normalized into the unit sphere, mimicking a corpus of CAD-like objects.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::cloud::{normalize_unit_sphere, random_sample, Point, PointCloud};
use crate::error::Result;
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Dense sample count before random sampling.
pub const RAW_POINTS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    /// Star-shaped surface with random Gaussian bumps, anisotropically scaled.
    Blob,
    /// Outer surface of a union of random ellipsoids.
    Ellipsoids,
    /// Torus with a varying tube radius.
    Torus,
    /// Outer surface of a union of random boxes and cylinders, like a CAD part.
    Primitives,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [
        ShapeKind::Primitives,
        ShapeKind::Blob,
        ShapeKind::Primitives,
        ShapeKind::Ellipsoids,
    ];
    pub const KINDS: [ShapeKind; 4] = [
        ShapeKind::Blob,
        ShapeKind::Ellipsoids,
        ShapeKind::Torus,
        ShapeKind::Primitives,
    ];
}

fn unit_dir(rng: &mut Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n: f64 = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn random_rotation(rng: &mut Rng) -> Matrix3<f64> {
    let axis = Unit::new_normalize(unit_dir(rng));
    Rotation3::from_axis_angle(&axis, rng.random_range(0.0..TAU)).into_inner()
}

fn blob(rng: &mut Rng, n: usize) -> Vec<Point> {
    let bumps: Vec<(Vector3<f64>, f64, f64)> = (0..rng.random_range(3..8))
        .map(|_| (unit_dir(rng), rng.random_range(-0.35..0.6), rng.random_range(0.15..0.6)))
        .collect();
    let scale = Vector3::new(
        rng.random_range(0.6..1.4),
        rng.random_range(0.6..1.4),
        rng.random_range(0.6..1.4),
    );
    (0..n)
        .map(|_| {
            let d = unit_dir(rng);
            let r = 1.0
                + bumps
                    .iter()
                    .map(|(c, a, w)| a * (-(d - c).norm_squared() / w).exp())
                    .sum::<f64>();
            (d * r).component_mul(&scale)
        })
        .collect()
}

fn ellipsoids(rng: &mut Rng, n: usize) -> Vec<Point> {
    let parts: Vec<(Vector3<f64>, Matrix3<f64>, Vector3<f64>)> = (0..rng.random_range(2..5))
        .map(|_| {
            let c = Vector3::new(
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
            );
            let axes = Vector3::new(
                rng.random_range(0.2..0.8),
                rng.random_range(0.2..0.8),
                rng.random_range(0.2..0.8),
            );
            (c, random_rotation(rng), axes)
        })
        .collect();
    let inside = |p: &Vector3<f64>, skip: usize| {
        parts
            .iter()
            .enumerate()
            .any(|(j, (c, r, a))| j != skip && (r.transpose() * (p - c)).component_div(a).norm_squared() < 1.0)
    };
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        let j = rng.random_range(0..parts.len());
        let (c, r, a) = &parts[j];
        let p = c + r * unit_dir(rng).component_mul(a);
        attempts += 1;
        // Hidden surface is dropped unless the parts nest almost completely.
        if !inside(&p, j) || attempts > 50 * n {
            out.push(p);
        }
    }
    out
}

fn torus(rng: &mut Rng, n: usize) -> Vec<Point> {
    let big = rng.random_range(0.8..1.2);
    let small = rng.random_range(0.2..0.45);
    let wobble = rng.random_range(0.2..0.6);
    let phase = rng.random_range(0.0..TAU);
    let squash = rng.random_range(0.6..1.0);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(0.0..TAU);
            let v: f64 = rng.random_range(0.0..TAU);
            let tube = small * (1.0 + wobble * (u + phase).sin() * 0.5 + 0.3 * (2.0 * u).cos() * wobble);
            let ring = big * (1.0 + 0.25 * (u - phase).cos());
            Vector3::new(
                (ring + tube * v.cos()) * u.cos(),
                (ring + tube * v.cos()) * u.sin() * squash,
                tube * v.sin() + 0.2 * wobble * u.cos(),
            )
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Solid {
    /// Half extents.
    Box(Vector3<f64>),
    /// Radius and half height along local z.
    Cylinder(f64, f64),
}

impl Solid {
    fn area(&self) -> f64 {
        match *self {
            Solid::Box(h) => 8.0 * (h.x * h.y + h.y * h.z + h.x * h.z),
            Solid::Cylinder(r, h) => TAU * r * (2.0 * h) + TAU * r * r,
        }
    }

    fn contains(&self, p: &Vector3<f64>) -> bool {
        match *self {
            Solid::Box(h) => p.x.abs() < h.x && p.y.abs() < h.y && p.z.abs() < h.z,
            Solid::Cylinder(r, h) => p.x * p.x + p.y * p.y < r * r && p.z.abs() < h,
        }
    }

    fn sample_surface(&self, rng: &mut Rng) -> Vector3<f64> {
        match *self {
            Solid::Box(h) => {
                let faces = [h.y * h.z, h.x * h.z, h.x * h.y];
                let total: f64 = faces.iter().sum();
                let mut pick = rng.random_range(0.0..total);
                let mut axis = 0;
                while axis < 2 && pick >= faces[axis] {
                    pick -= faces[axis];
                    axis += 1;
                }
                let mut p = Vector3::new(
                    rng.random_range(-h.x..h.x),
                    rng.random_range(-h.y..h.y),
                    rng.random_range(-h.z..h.z),
                );
                p[axis] = if rng.random::<bool>() { h[axis] } else { -h[axis] };
                p
            }
            Solid::Cylinder(r, h) => {
                let side = TAU * r * 2.0 * h;
                let a = rng.random_range(0.0..TAU);
                if rng.random_range(0.0..side + TAU * r * r) < side {
                    Vector3::new(r * a.cos(), r * a.sin(), rng.random_range(-h..h))
                } else {
                    let rr = r * rng.random::<f64>().sqrt();
                    let z = if rng.random::<bool>() { h } else { -h };
                    Vector3::new(rr * a.cos(), rr * a.sin(), z)
                }
            }
        }
    }
}

fn primitives(rng: &mut Rng, n: usize) -> Vec<Point> {
    let parts: Vec<(Solid, Vector3<f64>, Matrix3<f64>)> = (0..rng.random_range(3..7))
        .map(|_| {
            let solid = if rng.random_range(0.0..1.0) < 0.6 {
                Solid::Box(Vector3::new(
                    rng.random_range(0.08..0.6),
                    rng.random_range(0.08..0.6),
                    rng.random_range(0.08..0.6),
                ))
            } else {
                Solid::Cylinder(rng.random_range(0.08..0.4), rng.random_range(0.1..0.7))
            };
            let c = Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            );
            (solid, c, random_rotation(rng))
        })
        .collect();
    let areas: Vec<f64> = parts.iter().map(|(s, _, _)| s.area()).collect();
    let total: f64 = areas.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        let mut pick = rng.random_range(0.0..total);
        let mut j = 0;
        while j + 1 < parts.len() && pick >= areas[j] {
            pick -= areas[j];
            j += 1;
        }
        let (solid, c, r) = &parts[j];
        let p = c + r * solid.sample_surface(rng);
        attempts += 1;
        let hidden = parts
            .iter()
            .enumerate()
            .any(|(k, (s, ck, rk))| k != j && s.contains(&(rk.transpose() * (p - ck))));
        if !hidden || attempts > 50 * n {
            out.push(p);
        }
    }
    out
}

/// One normalized cloud of `n` points of the given kind.
pub fn synth_shape(kind: ShapeKind, n: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = rng_from_seed(seed);
    let raw = RAW_POINTS.max(n);
    let pts = match kind {
        ShapeKind::Blob => blob(&mut rng, raw),
        ShapeKind::Ellipsoids => ellipsoids(&mut rng, raw),
        ShapeKind::Torus => torus(&mut rng, raw),
        ShapeKind::Primitives => primitives(&mut rng, raw),
    };
    let rot = random_rotation(&mut rng);
    let dense = PointCloud::new(pts.iter().map(|p| rot * p).collect())?;
    let sampled = random_sample(&dense, n, derive_seed(seed, 1))?;
    Ok(normalize_unit_sphere(&sampled).cloud)
}

/// `count` clouds cycling through [`ShapeKind::ALL`] (CAD-like parts every
/// other cloud), each with its own derived seed.
pub fn synth_corpus(count: usize, n: usize, seed: u64) -> Result<Vec<PointCloud>> {
    (0..count)
        .map(|i| synth_shape(ShapeKind::ALL[i % ShapeKind::ALL.len()], n, derive_seed(seed, i as u64)))
        .collect()
}
