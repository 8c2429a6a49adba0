use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Points retained and neighborhood size for one hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopConfig {
    pub num_points: usize,
    pub k_neighbors: usize,
}

impl HopConfig {
    pub const fn new(num_points: usize, k_neighbors: usize) -> Self {
        Self {
            num_points,
            k_neighbors,
        }
    }
}

/// Minimum neighborhood per hop: one point per octant on average.
pub const MIN_HOP_NEIGHBORS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Neighbors used for the per-point local PCA.
    pub k_lrf: usize,
    /// Hop 1 first; its `num_points` is the initial random sample size.
    pub hops: Vec<HopConfig>,
    /// Nodes with cumulative energy at or below this are discarded.
    pub energy_threshold: f64,
    /// Cumulative energy at which a single Saab fit stops adding filters.
    pub energy_keep: f64,
    /// Append per-point aux rows and eigenvalue features to the hop-1 attributes.
    pub use_aux_attributes: bool,
    /// Normalize clouds into the unit sphere before training and registration.
    pub normalize: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            k_lrf: 64,
            hops: vec![
                HopConfig::new(1024, 64),
                HopConfig::new(768, 32),
                HopConfig::new(512, 48),
                HopConfig::new(384, 48),
            ],
            energy_threshold: 0.001,
            energy_keep: 1.0,
            use_aux_attributes: false,
            normalize: true,
            seed: 0,
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    k_lrf: Option<usize>,
    num_points: Option<Vec<usize>>,
    k_neighbors: Option<Vec<usize>>,
    energy_threshold: Option<f64>,
    energy_keep: Option<f64>,
    use_aux_attributes: Option<bool>,
    normalize: Option<bool>,
    seed: Option<u64>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        let Some(first) = self.hops.first() else {
            return err("at least one hop is required".into());
        };
        if self.k_lrf < 3 {
            return err(format!("k_lrf must be at least 3, got {}", self.k_lrf));
        }
        if self.k_lrf > first.num_points {
            return err(format!(
                "k_lrf ({}) exceeds the hop-1 point count ({})",
                self.k_lrf, first.num_points
            ));
        }
        let mut prev = usize::MAX;
        for (h, hop) in self.hops.iter().enumerate() {
            if hop.num_points > prev {
                return err(format!("hop {} keeps more points than hop {h}", h + 1));
            }
            if hop.k_neighbors < MIN_HOP_NEIGHBORS {
                return err(format!("hop {} needs at least {MIN_HOP_NEIGHBORS} neighbors", h + 1));
            }
            if hop.k_neighbors > hop.num_points {
                return err(format!("hop {} asks for more neighbors than points", h + 1));
            }
            prev = hop.num_points;
        }
        if !(self.energy_threshold >= 0.0) || !self.energy_threshold.is_finite() {
            return err(format!("energy_threshold must be >= 0, got {}", self.energy_threshold));
        }
        if !(self.energy_keep > 0.0) {
            return err(format!("energy_keep must be > 0, got {}", self.energy_keep));
        }
        Ok(())
    }

    pub fn num_hops(&self) -> usize {
        self.hops.len()
    }

    /// Per-hop sizes for a cloud of `n` points. Clouds smaller than the hop-1
    /// count get every hop scaled by `n / hop1` (keeping point density) when
    /// `allow_scaling` is set; otherwise they are rejected.
    pub fn schedule_for(&self, n: usize, allow_scaling: bool) -> Result<Vec<HopConfig>> {
        let hop1 = self.hops[0].num_points;
        if n >= hop1 {
            return Ok(self.hops.clone());
        }
        if !allow_scaling || n < self.k_lrf {
            return Err(Error::TooFew {
                requested: hop1,
                available: n,
            });
        }
        let ratio = n as f64 / hop1 as f64;
        let mut out = Vec::with_capacity(self.hops.len());
        for (h, hop) in self.hops.iter().enumerate() {
            let num_points = if h == 0 {
                n
            } else {
                ((hop.num_points as f64 * ratio).round() as usize).max(1)
            };
            if num_points < hop.k_neighbors {
                return Err(Error::TooFew {
                    requested: hop.k_neighbors,
                    available: num_points,
                });
            }
            out.push(HopConfig::new(num_points, hop.k_neighbors));
        }
        Ok(out)
    }

    /// Parses the flat key-value config text. Missing keys take default values.
    pub fn from_text(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = Self::default();
        if let Some(v) = raw.k_lrf {
            cfg.k_lrf = v;
        }
        match (raw.num_points, raw.k_neighbors) {
            (None, None) => {}
            (Some(p), Some(k)) if p.len() == k.len() => {
                cfg.hops = p.into_iter().zip(k).map(|(p, k)| HopConfig::new(p, k)).collect();
            }
            (Some(p), Some(k)) => {
                return Err(Error::Config(format!(
                    "num_points has {} entries but k_neighbors has {}",
                    p.len(),
                    k.len()
                )));
            }
            _ => {
                return Err(Error::Config(
                    "num_points and k_neighbors must be given together".into(),
                ))
            }
        }
        if let Some(v) = raw.energy_threshold {
            cfg.energy_threshold = v;
        }
        if let Some(v) = raw.energy_keep {
            cfg.energy_keep = v;
        }
        if let Some(v) = raw.use_aux_attributes {
            cfg.use_aux_attributes = v;
        }
        if let Some(v) = raw.normalize {
            cfg.normalize = v;
        }
        if let Some(v) = raw.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let list = |f: fn(&HopConfig) -> usize| {
            self.hops
                .iter()
                .map(|h| f(h).to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut s = String::new();
        let _ = writeln!(s, "k_lrf = {}", self.k_lrf);
        let _ = writeln!(s, "num_points = [{}]", list(|h| h.num_points));
        let _ = writeln!(s, "k_neighbors = [{}]", list(|h| h.k_neighbors));
        let _ = writeln!(s, "energy_threshold = {:?}", self.energy_threshold);
        let _ = writeln!(s, "energy_keep = {:?}", self.energy_keep);
        let _ = writeln!(s, "use_aux_attributes = {}", self.use_aux_attributes);
        let _ = writeln!(s, "normalize = {}", self.normalize);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
