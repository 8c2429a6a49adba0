//! Rotation-invariant point features learned without labels, and rigid
//! registration built on them.
//!
//! The pipeline: sample a cloud, build a sign-disambiguated local frame per
//! point, pool neighborhood attributes per octant of that frame, and pass them
//! through a cascade of Saab (PCA with bias) transforms. Matching the
//! resulting descriptors between two clouds gives correspondences, from which
//! a closed-form SVD estimate (optionally RANSAC and ICP) recovers the motion.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cloud;
pub mod error;
pub mod io;
pub mod lrf;
pub mod pipeline;
pub mod registration;
pub mod rng;
pub mod saab;
pub mod spatial;
pub mod synth;
pub mod transform;

pub use cloud::{Point, PointCloud};
pub use error::{Error, Result};
pub use pipeline::{
    extract_features, extract_features_scaled, load_model, save_model, train, FeatureSet, ModelConfig, RPointHopModel,
};
pub use transform::{EulerXyz, RigidTransform};
