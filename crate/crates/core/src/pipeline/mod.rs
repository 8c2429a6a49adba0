//! Multi-hop feature learning.
//!
//! Hop 1 pools each point's neighborhood coordinates per octant of its local
//! frame (24 values) and fits one Saab transform on the pooled training set.
//! Every later hop downsamples with FPS, pools each surviving spectral channel
//! per octant (8 values) and fits one Saab transform per channel. A node whose
//! cumulative energy does not exceed the threshold is dropped; the surviving
//! nodes of the last hop form the feature vector.

mod attributes;
mod config;
mod geometry;
mod model_io;

pub use attributes::{
    aux_extension, build_hop1_attributes, build_later_hop_attributes, octant_index, octant_means_3d, Hop1Attribute,
    HOP1_WIDTH, NUM_OCTANTS,
};
pub use config::{HopConfig, ModelConfig, MIN_HOP_NEIGHBORS};
pub use geometry::{CloudGeometry, HopGeometry};
pub use model_io::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};

use log::debug;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cloud::{normalize_unit_sphere, Point, PointCloud};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::saab::{saab_fit, FeatureTree, NodeId, NodeStatus, SaabFitOptions, SaabLayer};
use attributes::octant_means_coded;

/// Saab layer fitted on one channel (tree node) of the previous hop.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelLayer {
    pub node: NodeId,
    pub layer: SaabLayer,
}

/// A trained multi-hop model.
#[derive(Debug, Clone, PartialEq)]
pub struct RPointHopModel {
    pub config: ModelConfig,
    /// Width of the hop-1 attribute extension (0 without aux attributes).
    pub aux_width: usize,
    pub hop1: SaabLayer,
    /// Hops 2..=H: one layer per frontier channel, in frontier order.
    pub later_hops: Vec<Vec<ChannelLayer>>,
    pub tree: FeatureTree,
}

impl RPointHopModel {
    pub fn feature_dim(&self) -> usize {
        self.tree.output_dim()
    }

    /// Number of channels passed on after each hop (the output count for the last one).
    pub fn surviving_per_hop(&self) -> Vec<usize> {
        (1..=self.config.num_hops())
            .map(|h| {
                self.tree
                    .nodes()
                    .iter()
                    .filter(|n| n.hop == h && n.status != NodeStatus::Discarded)
                    .count()
            })
            .collect()
    }

    /// Stored scalars across all layers.
    pub fn parameter_count(&self) -> usize {
        self.hop1.parameter_count()
            + self
                .later_hops
                .iter()
                .flatten()
                .map(|c| c.layer.parameter_count())
                .sum::<usize>()
    }

    /// Kept output channels of the transform fitted on `node`.
    fn kept_children(&self, node: NodeId) -> Vec<usize> {
        self.tree
            .children(node)
            .filter(|c| c.status != NodeStatus::Discarded)
            .map(|c| c.channel)
            .collect()
    }
}

/// Per-point invariant descriptors for the final-hop points of a cloud.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    /// Indices into the cloud the features were extracted from.
    pub point_indices: Vec<usize>,
    pub coords: Vec<Point>,
    /// One row per point.
    pub features: DMatrix<f64>,
    /// Smallest sign-decision margin seen for the point across hops.
    pub moment_gap: Vec<f64>,
    /// Smallest gap between consecutive eigenvalues of the point's frame.
    pub eigen_gap: Vec<f64>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }
}

fn vstack(parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let width = parts.first().map_or(0, |m| m.ncols());
    let rows: usize = parts.iter().map(|m| m.nrows()).sum();
    let mut out = DMatrix::zeros(rows, width);
    let mut r0 = 0;
    for m in parts {
        out.rows_mut(r0, m.nrows()).copy_from(m);
        r0 += m.nrows();
    }
    out
}

fn hstack(parts: &[DMatrix<f64>], rows: usize) -> DMatrix<f64> {
    let cols: usize = parts.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c0 = 0;
    for m in parts {
        out.columns_mut(c0, m.ncols()).copy_from(m);
        c0 += m.ncols();
    }
    out
}

/// 8-D attributes of one channel for every point of `hop`.
fn channel_attributes(hop: &HopGeometry, prev: &DMatrix<f64>, channel: usize) -> DMatrix<f64> {
    let column = prev.column(channel);
    let n = hop.len();
    let mut out = DMatrix::zeros(n, NUM_OCTANTS);
    for i in 0..n {
        let values = hop.neighbors_of(i).iter().map(|&r| column[hop.parent_rows[r]]);
        let means = octant_means_coded(hop.octants_of(i), values);
        for (c, v) in means.iter().enumerate() {
            out[(i, c)] = *v;
        }
    }
    out
}

/// Applies `layer` to each row and keeps the listed output channels.
fn transform_select(layer: &SaabLayer, attrs: &DMatrix<f64>, keep: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(attrs.nrows(), keep.len());
    let mut v = vec![0.0; attrs.ncols()];
    let mut y = vec![0.0; layer.kept_dim()];
    for r in 0..attrs.nrows() {
        for (c, slot) in v.iter_mut().enumerate() {
            *slot = attrs[(r, c)];
        }
        layer.apply_into(&v, &mut y);
        for (j, &k) in keep.iter().enumerate() {
            out[(r, j)] = y[k];
        }
    }
    out
}

fn check_aux_width(cloud: &PointCloud, expected: Option<usize>, use_aux: bool) -> Result<()> {
    if let (true, Some(w)) = (use_aux, expected) {
        if cloud.aux_width() != w {
            return Err(Error::DimensionMismatch {
                expected: w,
                got: cloud.aux_width(),
            });
        }
    }
    Ok(())
}

/// Fits a model on `corpus`. Each cloud is (optionally) normalized and
/// sampled down to the hop-1 point count with a seed derived from `config.seed`.
pub fn train(corpus: &[PointCloud], config: &ModelConfig) -> Result<RPointHopModel> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidInput("training corpus is empty".into()));
    }
    let use_aux = config.use_aux_attributes;
    let cloud_aux = corpus[0].aux_width();
    for c in corpus {
        check_aux_width(c, Some(cloud_aux), use_aux)?;
    }
    let fit = SaabFitOptions {
        energy_keep: config.energy_keep,
    };
    let threshold = config.energy_threshold;
    let num_hops = config.num_hops();

    let geoms: Vec<CloudGeometry> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let prepared;
            let c = if config.normalize {
                prepared = normalize_unit_sphere(c).cloud;
                &prepared
            } else {
                c
            };
            let schedule = config.schedule_for(c.len(), false)?;
            CloudGeometry::build(c, &schedule, config.k_lrf, derive_seed(config.seed, i as u64), use_aux)
        })
        .collect::<Result<_>>()?;

    // Hop 1: one joint transform over every point of every cloud.
    let pooled = vstack(&geoms.iter().map(|g| g.hop1_attributes.clone()).collect::<Vec<_>>());
    let hop1 = saab_fit(&pooled, fit)?;
    drop(pooled);
    let mut tree = FeatureTree::new();
    tree.grow(&[(0, hop1.energies())], threshold, num_hops == 1)?;
    let keep: Vec<usize> = tree
        .children(0)
        .filter(|n| n.status != NodeStatus::Discarded)
        .map(|n| n.channel)
        .collect();
    let mut features: Vec<DMatrix<f64>> = geoms
        .iter()
        .map(|g| transform_select(&hop1, &g.hop1_attributes, &keep))
        .collect();
    debug!("hop 1: {} of {} channels kept", keep.len(), hop1.kept_dim());

    let mut later_hops = Vec::with_capacity(num_hops.saturating_sub(1));
    for h in 1..num_hops {
        let frontier = tree.frontier();
        if frontier.is_empty() {
            return Err(Error::ZeroSurvivingChannels { hop: h + 1 });
        }
        let is_final = h + 1 == num_hops;
        let fitted: Vec<(SaabLayer, Vec<usize>, Vec<DMatrix<f64>>)> = frontier
            .par_iter()
            .enumerate()
            .map(|(channel, &node)| {
                let attrs: Vec<DMatrix<f64>> = geoms
                    .iter()
                    .zip(&features)
                    .map(|(g, prev)| channel_attributes(&g.hops[h], prev, channel))
                    .collect();
                let layer = saab_fit(&vstack(&attrs), fit)?;
                let parent_energy = tree.node(node).energy;
                let keep: Vec<usize> = layer
                    .energies()
                    .iter()
                    .enumerate()
                    .filter(|(_, &f)| parent_energy * f > threshold)
                    .map(|(k, _)| k)
                    .collect();
                let outs = attrs.iter().map(|a| transform_select(&layer, a, &keep)).collect();
                Ok((layer, keep, outs))
            })
            .collect::<Result<_>>()?;

        let transforms: Vec<(NodeId, &[f64])> = frontier
            .iter()
            .zip(&fitted)
            .map(|(&node, (layer, _, _))| (node, layer.energies()))
            .collect();
        tree.grow(&transforms, threshold, is_final)?;

        let kept_total: usize = fitted.iter().map(|(_, k, _)| k.len()).sum();
        debug!("hop {}: {} channels in, {} kept", h + 1, frontier.len(), kept_total);
        features = (0..geoms.len())
            .map(|ci| {
                let parts: Vec<DMatrix<f64>> = fitted.iter().map(|(_, _, outs)| outs[ci].clone()).collect();
                hstack(&parts, geoms[ci].hops[h].len())
            })
            .collect();
        later_hops.push(
            frontier
                .iter()
                .zip(fitted)
                .map(|(&node, (layer, _, _))| ChannelLayer { node, layer })
                .collect(),
        );
    }

    if tree.output_dim() == 0 {
        return Err(Error::ZeroSurvivingChannels { hop: num_hops });
    }
    Ok(RPointHopModel {
        config: config.clone(),
        aux_width: if use_aux { hop1.input_dim() - HOP1_WIDTH } else { 0 },
        hop1,
        later_hops,
        tree,
    })
}

/// Features for a cloud with at least the hop-1 number of points.
pub fn extract_features(model: &RPointHopModel, cloud: &PointCloud, seed: u64) -> Result<FeatureSet> {
    extract_with(model, cloud, seed, false)
}

/// Like [`extract_features`], but clouds smaller than the hop-1 count are
/// processed with every hop's point count scaled down proportionally.
pub fn extract_features_scaled(model: &RPointHopModel, cloud: &PointCloud, seed: u64) -> Result<FeatureSet> {
    extract_with(model, cloud, seed, true)
}

/// Neighborhood plan for `cloud` under the model's configuration.
pub fn plan_geometry(
    model: &RPointHopModel,
    cloud: &PointCloud,
    seed: u64,
    allow_scaling: bool,
) -> Result<CloudGeometry> {
    let cfg = &model.config;
    let schedule = cfg.schedule_for(cloud.len(), allow_scaling)?;
    if cfg.use_aux_attributes && cloud.aux_width() + 4 != model.aux_width {
        return Err(Error::DimensionMismatch {
            expected: model.aux_width.saturating_sub(4),
            got: cloud.aux_width(),
        });
    }
    CloudGeometry::build(cloud, &schedule, cfg.k_lrf, seed, cfg.use_aux_attributes)
}

fn extract_with(model: &RPointHopModel, cloud: &PointCloud, seed: u64, allow_scaling: bool) -> Result<FeatureSet> {
    let geom = plan_geometry(model, cloud, seed, allow_scaling)?;
    let mut feats = transform_select(&model.hop1, &geom.hop1_attributes, &model.kept_children(0));
    for (h, layers) in model.later_hops.iter().enumerate() {
        let hop = &geom.hops[h + 1];
        let parts: Vec<DMatrix<f64>> = layers
            .par_iter()
            .enumerate()
            .map(|(channel, cl)| {
                let attrs = channel_attributes(hop, &feats, channel);
                transform_select(&cl.layer, &attrs, &model.kept_children(cl.node))
            })
            .collect();
        feats = hstack(&parts, hop.len());
    }

    let last = geom.hops.last().expect("at least one hop");
    let mut moment_gap = vec![f64::INFINITY; last.len()];
    for (h, hop) in geom.hops.iter().enumerate() {
        for (gap, r) in moment_gap.iter_mut().zip(geom.final_rows_at(h)) {
            *gap = gap.min(hop.moment_gap[r]);
        }
    }
    let point_indices: Vec<usize> = last.points.iter().map(|&r| geom.sampled[r]).collect();
    let eigen_gap = last
        .points
        .iter()
        .map(|&r| {
            let l = geom.lrfs[r].eigenvalues;
            (l[0] - l[1]).min(l[1] - l[2])
        })
        .collect();
    if !feats.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("non-finite feature values".into()));
    }
    Ok(FeatureSet {
        coords: point_indices.iter().map(|&i| *cloud.point(i)).collect(),
        point_indices,
        features: feats,
        moment_gap,
        eigen_gap,
    })
}
