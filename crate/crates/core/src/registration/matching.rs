use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cloud::Point;
use crate::error::{Error, Result};
use crate::pipeline::FeatureSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// Keep the best `m1` by distance, then the best `m2` by ratio.
    Count,
    /// Keep distance `< t1`, then ratio `< t2`.
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    pub sample_size: usize,
    pub inlier_radius: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 512,
            sample_size: 4,
            inlier_radius: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub m1: usize,
    pub m2: usize,
    pub mode: MatchMode,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    /// Without the ratio test the distance-selected pairs are used as they are.
    pub ratio_test: bool,
    pub use_ransac: bool,
    pub ransac: RansacParams,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            m1: 256,
            m2: 128,
            mode: MatchMode::Count,
            t1: None,
            t2: None,
            ratio_test: true,
            use_ransac: false,
            ransac: RansacParams::default(),
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            MatchMode::Count => {
                if self.m1 == 0 || self.m2 == 0 {
                    return Err(Error::InvalidInput("m1 and m2 must be positive".into()));
                }
                if self.m2 > self.m1 {
                    return Err(Error::InvalidInput(format!(
                        "m2 ({}) exceeds m1 ({})",
                        self.m2, self.m1
                    )));
                }
            }
            MatchMode::Threshold => {
                let ok = |t: Option<f64>| t.is_some_and(|v| v > 0.0);
                if !ok(self.t1) || (self.ratio_test && !ok(self.t2)) {
                    return Err(Error::InvalidInput("threshold mode needs positive t1 and t2".into()));
                }
            }
        }
        Ok(())
    }
}

/// Matched pairs, `(target row, source row)`, with their matched coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pub pairs: Vec<(usize, usize)>,
    pub coords_target: Vec<Point>,
    pub coords_source: Vec<Point>,
    pub feature_distance: Vec<f64>,
    /// First over second nearest distance; 1 when the second distance is 0.
    pub ratio: Vec<f64>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn from_coords(target: Vec<Point>, source: Vec<Point>) -> Result<Self> {
        if target.len() != source.len() {
            return Err(Error::DimensionMismatch {
                expected: target.len(),
                got: source.len(),
            });
        }
        let n = target.len();
        Ok(Self {
            pairs: (0..n).map(|i| (i, i)).collect(),
            coords_target: target,
            coords_source: source,
            feature_distance: vec![0.0; n],
            ratio: vec![1.0; n],
        })
    }

    pub fn subset(&self, keep: &[usize]) -> Self {
        Self {
            pairs: keep.iter().map(|&i| self.pairs[i]).collect(),
            coords_target: keep.iter().map(|&i| self.coords_target[i]).collect(),
            coords_source: keep.iter().map(|&i| self.coords_source[i]).collect(),
            feature_distance: keep.iter().map(|&i| self.feature_distance[i]).collect(),
            ratio: keep.iter().map(|&i| self.ratio[i]).collect(),
        }
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

/// `D[i][j] = ‖target_i − source_j‖₂`.
pub fn feature_distance_matrix(target: &FeatureSet, source: &FeatureSet) -> Result<DMatrix<f64>> {
    if target.dim() != source.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: source.dim(),
        });
    }
    let t = rows_of(&target.features);
    let s = rows_of(&source.features);
    let rows: Vec<Vec<f64>> = t.par_iter().map(|a| s.iter().map(|b| l2(a, b)).collect()).collect();
    let mut d = DMatrix::zeros(t.len(), s.len());
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            d[(i, j)] = *v;
        }
    }
    if !d.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("non-finite feature distance".into()));
    }
    Ok(d)
}

struct Candidate {
    target: usize,
    source: usize,
    distance: f64,
    ratio: f64,
}

/// First and second nearest column per row; ties go to the lower column.
fn nearest_two(d: &DMatrix<f64>) -> Vec<Candidate> {
    (0..d.nrows())
        .map(|i| {
            let (mut j1, mut d1) = (usize::MAX, f64::INFINITY);
            let mut d2 = f64::INFINITY;
            for j in 0..d.ncols() {
                let v = d[(i, j)];
                if v < d1 {
                    d2 = d1;
                    j1 = j;
                    d1 = v;
                } else if v < d2 {
                    d2 = v;
                }
            }
            let ratio = if d2.is_finite() && d2 > 0.0 { d1 / d2 } else { 1.0 };
            Candidate {
                target: i,
                source: j1,
                distance: d1,
                ratio,
            }
        })
        .collect()
}

/// Matches a precomputed distance matrix (rows = target, columns = source).
pub fn match_distances(
    d: &DMatrix<f64>,
    target_coords: &[Point],
    source_coords: &[Point],
    params: &MatchParams,
) -> Result<CorrespondenceSet> {
    params.validate()?;
    if d.nrows() != target_coords.len() || d.ncols() != source_coords.len() {
        return Err(Error::DimensionMismatch {
            expected: target_coords.len() * source_coords.len(),
            got: d.len(),
        });
    }
    if d.ncols() == 0 {
        return Err(Error::EmptyCorrespondences);
    }
    let mut cands = nearest_two(d);
    let by_distance = |a: &Candidate, b: &Candidate| a.distance.total_cmp(&b.distance).then(a.target.cmp(&b.target));
    let by_ratio = |a: &Candidate, b: &Candidate| {
        a.ratio
            .total_cmp(&b.ratio)
            .then(a.distance.total_cmp(&b.distance))
            .then(a.target.cmp(&b.target))
    };
    cands.sort_by(by_distance);
    match params.mode {
        MatchMode::Count => {
            if params.m1 > cands.len() {
                return Err(Error::TooFew {
                    requested: params.m1,
                    available: cands.len(),
                });
            }
            cands.truncate(params.m1);
            if params.ratio_test {
                cands.sort_by(by_ratio);
                cands.truncate(params.m2);
            }
        }
        MatchMode::Threshold => {
            let t1 = params.t1.expect("validated");
            cands.retain(|c| c.distance < t1);
            if params.ratio_test {
                let t2 = params.t2.expect("validated");
                cands.retain(|c| c.ratio < t2);
                cands.sort_by(by_ratio);
            }
        }
    }
    if cands.is_empty() {
        return Err(Error::EmptyCorrespondences);
    }
    Ok(CorrespondenceSet {
        pairs: cands.iter().map(|c| (c.target, c.source)).collect(),
        coords_target: cands.iter().map(|c| target_coords[c.target]).collect(),
        coords_source: cands.iter().map(|c| source_coords[c.source]).collect(),
        feature_distance: cands.iter().map(|c| c.distance).collect(),
        ratio: cands.iter().map(|c| c.ratio).collect(),
    })
}

/// Feature-space correspondences from target rows to source rows.
pub fn match_features(target: &FeatureSet, source: &FeatureSet, params: &MatchParams) -> Result<CorrespondenceSet> {
    let d = feature_distance_matrix(target, source)?;
    match_distances(&d, &target.coords, &source.coords, params)
}
