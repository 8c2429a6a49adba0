//! Binary model container.
//!
//! Layout (all integers u64 and floats f64, little-endian, unless noted):
//! magic `RPH1`, format version (u32), config, aux width, tree nodes,
//! hop-1 layer, later-hop channel layers, then an FNV-1a checksum of every
//! preceding byte.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{ChannelLayer, HopConfig, ModelConfig, RPointHopModel};
use crate::error::{Error, Result};
use crate::saab::{FeatureTree, NodeStatus, SaabLayer, TreeNode};

pub const MODEL_MAGIC: &[u8; 4] = b"RPH1";
pub const MODEL_FORMAT_VERSION: u32 = 1;

const NO_PARENT: u64 = u64::MAX;
// Guards against absurd allocations from a damaged length field.
const MAX_LEN: u64 = 1 << 32;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn layer(&mut self, layer: &SaabLayer) {
        let f = layer.filters();
        self.usize(f.nrows());
        self.usize(f.ncols());
        for r in 0..f.nrows() {
            for c in 0..f.ncols() {
                self.f64(f[(r, c)]);
            }
        }
        self.f64(layer.bias());
        for &e in layer.energies() {
            self.f64(e);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptModel(format!("unexpected end of data at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v > MAX_LEN {
            return Err(Error::CorruptModel(format!("implausible length {v}")));
        }
        Ok(v as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::CorruptModel(format!("invalid flag byte {b}"))),
        }
    }
    fn layer(&mut self) -> Result<SaabLayer> {
        let rows = self.len()?;
        let cols = self.len()?;
        let count = rows
            .checked_mul(cols)
            .filter(|&c| c as u64 <= MAX_LEN)
            .ok_or_else(|| Error::CorruptModel("implausible filter bank size".into()))?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(self.f64()?);
        }
        let filters = DMatrix::from_row_slice(rows, cols, &data);
        let bias = self.f64()?;
        let energies = (0..rows).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        SaabLayer::from_parts(filters, bias, energies).map_err(|e| Error::CorruptModel(e.to_string()))
    }
}

fn status_code(s: NodeStatus) -> u8 {
    match s {
        NodeStatus::Intermediate => 0,
        NodeStatus::Discarded => 1,
        NodeStatus::Output => 2,
    }
}

/// Serializes a model to its binary container.
pub fn model_to_bytes(model: &RPointHopModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.0.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());

    let cfg = &model.config;
    w.usize(cfg.k_lrf);
    w.usize(cfg.hops.len());
    for h in &cfg.hops {
        w.usize(h.num_points);
        w.usize(h.k_neighbors);
    }
    w.f64(cfg.energy_threshold);
    w.f64(cfg.energy_keep);
    w.u8(cfg.use_aux_attributes as u8);
    w.u8(cfg.normalize as u8);
    w.u64(cfg.seed);
    w.usize(model.aux_width);

    let nodes = model.tree.nodes();
    w.usize(nodes.len());
    for n in nodes {
        w.usize(n.hop);
        w.u64(n.parent.map_or(NO_PARENT, |p| p as u64));
        w.usize(n.channel);
        w.f64(n.energy);
        w.u8(status_code(n.status));
    }

    w.layer(&model.hop1);
    w.usize(model.later_hops.len());
    for hop in &model.later_hops {
        w.usize(hop.len());
        for cl in hop {
            w.usize(cl.node);
            w.layer(&cl.layer);
        }
    }
    let sum = fnv1a(&w.0);
    w.u64(sum);
    w.0
}

/// Parses a binary model container.
pub fn model_from_bytes(bytes: &[u8]) -> Result<RPointHopModel> {
    if bytes.len() < 4 || &bytes[..4] != MODEL_MAGIC {
        return Err(Error::CorruptModel("missing RPH1 header".into()));
    }
    if bytes.len() < 8 {
        return Err(Error::CorruptModel("truncated header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if bytes.len() < 16 {
        return Err(Error::CorruptModel("truncated file".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 8);
    if fnv1a(body) != u64::from_le_bytes(trailer.try_into().unwrap()) {
        return Err(Error::CorruptModel("checksum mismatch".into()));
    }

    let mut r = Reader { buf: body, pos: 8 };
    let k_lrf = r.len()?;
    let num_hops = r.len()?;
    let hops = (0..num_hops)
        .map(|_| {
            Ok(HopConfig {
                num_points: r.len()?,
                k_neighbors: r.len()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let config = ModelConfig {
        k_lrf,
        hops,
        energy_threshold: r.f64()?,
        energy_keep: r.f64()?,
        use_aux_attributes: r.flag()?,
        normalize: r.flag()?,
        seed: r.u64()?,
    };
    config.validate().map_err(|e| Error::CorruptModel(e.to_string()))?;
    let aux_width = r.len()?;

    let num_nodes = r.len()?;
    let mut nodes = Vec::with_capacity(num_nodes.min(1 << 20));
    for id in 0..num_nodes {
        let hop = r.len()?;
        let parent = match r.u64()? {
            NO_PARENT => None,
            p => Some(p as usize),
        };
        let channel = r.len()?;
        let energy = r.f64()?;
        let status = match r.u8()? {
            0 => NodeStatus::Intermediate,
            1 => NodeStatus::Discarded,
            2 => NodeStatus::Output,
            s => return Err(Error::CorruptModel(format!("invalid node status {s}"))),
        };
        nodes.push(TreeNode {
            id,
            hop,
            parent,
            channel,
            energy,
            status,
        });
    }
    let tree = FeatureTree::from_nodes(nodes).map_err(|e| Error::CorruptModel(e.to_string()))?;

    let hop1 = r.layer()?;
    let num_later = r.len()?;
    if num_later + 1 != config.num_hops() {
        return Err(Error::CorruptModel(format!(
            "{} layer groups for a {}-hop config",
            num_later + 1,
            config.num_hops()
        )));
    }
    let mut later_hops = Vec::with_capacity(num_later);
    for _ in 0..num_later {
        let n = r.len()?;
        let mut hop = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let node = r.len()?;
            if node >= tree.nodes().len() {
                return Err(Error::CorruptModel(format!("layer refers to missing node {node}")));
            }
            hop.push(ChannelLayer {
                node,
                layer: r.layer()?,
            });
        }
        later_hops.push(hop);
    }
    if r.pos != body.len() {
        return Err(Error::CorruptModel(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(RPointHopModel {
        config,
        aux_width,
        hop1,
        later_hops,
        tree,
    })
}

pub fn save_model(model: &RPointHopModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RPointHopModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
