//! Per-cloud neighborhood structure shared by training and inference.
//!
//! Everything here depends only on point positions, never on learned
//! parameters, so it is computed once per cloud.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::attributes::{aux_extension, octant_index, octant_means_3d, HOP1_WIDTH};
use super::config::HopConfig;
use crate::cloud::{random_sample_indices, Point, PointCloud};
use crate::error::{Error, Result};
use crate::lrf::{self, Lrf, SignState};
use crate::spatial::{build_index, farthest_point_sample, KnnIndex};

/// One hop's retained points and their sign-resolved neighborhoods.
#[derive(Debug, Clone)]
pub struct HopGeometry {
    /// Rows into the hop-1 point list.
    pub points: Vec<usize>,
    /// Rows into the previous hop's point list (identity at hop 1).
    pub parent_rows: Vec<usize>,
    pub k: usize,
    /// `k` neighbor rows per point (rows of this hop), nearest first.
    pub neighbors: Vec<usize>,
    /// Octant code of each neighbor in the point's signed frame.
    pub octants: Vec<u8>,
    pub signs: Vec<SignState>,
    /// Smallest per-axis `|M_r - M_l|` seen when resolving this point's signs.
    pub moment_gap: Vec<f64>,
}

impl HopGeometry {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn neighbors_of(&self, row: usize) -> &[usize] {
        &self.neighbors[row * self.k..(row + 1) * self.k]
    }

    pub fn octants_of(&self, row: usize) -> &[u8] {
        &self.octants[row * self.k..(row + 1) * self.k]
    }
}

#[derive(Debug, Clone)]
pub struct CloudGeometry {
    /// Indices of the hop-1 points in the input cloud.
    pub sampled: Vec<usize>,
    /// The hop-1 points themselves.
    pub cloud: PointCloud,
    /// One frame per hop-1 point, reused at every hop.
    pub lrfs: Vec<Lrf>,
    pub hops: Vec<HopGeometry>,
    /// Hop-1 attributes, one row per hop-1 point.
    pub hop1_attributes: DMatrix<f64>,
}

struct PointPlan {
    neighbors: Vec<usize>,
    octants: Vec<u8>,
    signs: SignState,
    gap: f64,
}

fn plan_point(lrf: &Lrf, coords: &[Point], neighbors: Vec<usize>) -> PointPlan {
    let pts: Vec<Point> = neighbors.iter().map(|&j| coords[j]).collect();
    let moments = lrf::frame_moments(lrf, &pts);
    let signs = SignState {
        flips: [moments[0].sign(), moments[1].sign(), moments[2].sign()],
    };
    let octants = lrf::project_to_lrf(&pts, lrf, &signs)
        .iter()
        .map(|v| octant_index(v) as u8)
        .collect();
    PointPlan {
        neighbors,
        octants,
        signs,
        gap: moments.iter().map(|m| m.gap()).fold(f64::INFINITY, f64::min),
    }
}

fn collect_hop(points: Vec<usize>, parent_rows: Vec<usize>, k: usize, plans: Vec<PointPlan>) -> HopGeometry {
    let mut hop = HopGeometry {
        points,
        parent_rows,
        k,
        neighbors: Vec::with_capacity(plans.len() * k),
        octants: Vec::with_capacity(plans.len() * k),
        signs: Vec::with_capacity(plans.len()),
        moment_gap: Vec::with_capacity(plans.len()),
    };
    for p in plans {
        hop.neighbors.extend(p.neighbors);
        hop.octants.extend(p.octants);
        hop.signs.push(p.signs);
        hop.moment_gap.push(p.gap);
    }
    hop
}

impl CloudGeometry {
    /// Samples `schedule[0].num_points` points with `seed`, computes frames with
    /// `k_lrf` neighbors, then plans every hop (FPS from the previous hop's
    /// points, starting at its first point).
    pub fn build(input: &PointCloud, schedule: &[HopConfig], k_lrf: usize, seed: u64, use_aux: bool) -> Result<Self> {
        let first = schedule
            .first()
            .ok_or_else(|| Error::InvalidInput("empty hop schedule".into()))?;
        let sampled = random_sample_indices(input.len(), first.num_points, seed)?;
        let cloud = input.select(&sampled)?;
        let coords = cloud.coords();
        let n = coords.len();
        if k_lrf > n {
            return Err(Error::TooFew {
                requested: k_lrf,
                available: n,
            });
        }
        let index = build_index(&cloud);

        let lrfs = (0..n)
            .into_par_iter()
            .map(|i| lrf::compute_lrf(&cloud, i, k_lrf, &index))
            .collect::<Result<Vec<_>>>()?;

        let k1 = first.k_neighbors;
        let hop1: Vec<(PointPlan, [f64; HOP1_WIDTH])> = (0..n)
            .into_par_iter()
            .map(|i| {
                let nbrs = index.knn_indices(&coords[i], k1)?;
                let plan = plan_point(&lrfs[i], coords, nbrs);
                let pts: Vec<Point> = plan.neighbors.iter().map(|&j| coords[j]).collect();
                let local = lrf::project_to_lrf(&pts, &lrfs[i], &plan.signs);
                Ok((plan, octant_means_3d(&local)))
            })
            .collect::<Result<Vec<_>>>()?;

        let aux: Vec<Vec<f64>> = if use_aux {
            (0..n)
                .map(|i| aux_extension(&cloud, i, &lrfs[i]))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let aux_width = aux.first().map_or(0, Vec::len);
        let width = HOP1_WIDTH + aux_width;
        let mut hop1_attributes = DMatrix::zeros(n, width);
        for (i, (_, attr)) in hop1.iter().enumerate() {
            for (c, v) in attr.iter().enumerate() {
                hop1_attributes[(i, c)] = *v;
            }
            if use_aux {
                for (c, v) in aux[i].iter().enumerate() {
                    hop1_attributes[(i, HOP1_WIDTH + c)] = *v;
                }
            }
        }

        let mut hops = Vec::with_capacity(schedule.len());
        hops.push(collect_hop(
            (0..n).collect(),
            (0..n).collect(),
            k1,
            hop1.into_iter().map(|(p, _)| p).collect(),
        ));

        for cfg in &schedule[1..] {
            let prev = hops.last().expect("hop 1 is present");
            let prev_coords: Vec<Point> = prev.points.iter().map(|&r| coords[r]).collect();
            let parent_rows = farthest_point_sample(&prev_coords, cfg.num_points, 0)?;
            let points: Vec<usize> = parent_rows.iter().map(|&r| prev.points[r]).collect();
            let hop_coords: Vec<Point> = points.iter().map(|&r| coords[r]).collect();
            let hop_index = KnnIndex::from_points(hop_coords.clone())?;
            let plans = points
                .par_iter()
                .map(|&r| {
                    let nbrs = hop_index.knn_indices(&coords[r], cfg.k_neighbors)?;
                    Ok(plan_point(&lrfs[r], &hop_coords, nbrs))
                })
                .collect::<Result<Vec<_>>>()?;
            hops.push(collect_hop(points, parent_rows, cfg.k_neighbors, plans));
        }

        Ok(Self {
            sampled,
            cloud,
            lrfs,
            hops,
            hop1_attributes,
        })
    }

    /// Rows of the final hop's points in hop `h` (0-based), following parent links.
    pub fn final_rows_at(&self, h: usize) -> Vec<usize> {
        let last = self.hops.len() - 1;
        let mut rows: Vec<usize> = (0..self.hops[last].len()).collect();
        for hop in (h + 1..=last).rev() {
            rows = rows.iter().map(|&r| self.hops[hop].parent_rows[r]).collect();
        }
        rows
    }
}
