//! Exact k-nearest-neighbor queries and farthest-point sampling.
//!
//! Both routines order candidates by `(squared distance, index)`, so results
//! are fully determined by the input and match a brute-force scan exactly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

/// Squared Euclidean distance, evaluated in a fixed order so every caller
/// (including test oracles) gets bit-identical values.
#[inline]
pub fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// A static k-d tree over a point set.
#[derive(Debug, Clone)]
pub struct KnnIndex {
    points: Vec<Point>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

pub fn build_index(cloud: &PointCloud) -> KnnIndex {
    KnnIndex::from_points(cloud.coords().to_vec()).expect("a PointCloud always holds at least one point")
}

impl KnnIndex {
    pub fn from_points(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("cannot index an empty point set".into()));
        }
        let mut index = Self {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        let n = index.points.len();
        index.build(0, n);
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let slice = &self.order[start..end];
        let (mut lo, mut hi) = (Point::repeat(f64::INFINITY), Point::repeat(f64::NEG_INFINITY));
        for &i in slice {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let dim = (hi - lo).imax();
        if hi[dim] == lo[dim] {
            // All points coincide.
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = (end - start) / 2;
        let points = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid, |&a, &b| points[a][dim].total_cmp(&points[b][dim]).then(a.cmp(&b)));
        let value = self.points[self.order[start + mid]][dim];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, start + mid);
        let right = self.build(start + mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` nearest points to `query`, closest first, ties by ascending index.
    pub fn knn(&self, query: &Point, k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 || k > self.points.len() {
            return Err(Error::TooFew {
                requested: k,
                available: self.points.len(),
            });
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        let mut found = heap.into_vec();
        found.sort_unstable();
        Ok(found
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: c.d2.sqrt(),
            })
            .collect())
    }

    /// Indices only; same ordering as [`KnnIndex::knn`].
    pub fn knn_indices(&self, query: &Point, k: usize) -> Result<Vec<usize>> {
        Ok(self.knn(query, k)?.into_iter().map(|n| n.index).collect())
    }

    pub fn nearest(&self, query: &Point) -> Neighbor {
        self.knn(query, 1).expect("index is non-empty")[0]
    }

    fn search(&self, node: usize, q: &Point, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate {
                        d2: dist2(q, &self.points[i]),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                // Points on the far side are at least |diff| away; only skip
                // them when strictly farther than the current k-th candidate.
                if heap.len() < k || diff * diff <= heap.peek().expect("heap is full").d2 {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

pub fn knn(index: &KnnIndex, query: &Point, k: usize) -> Result<Vec<Neighbor>> {
    index.knn(query, k)
}

/// Greedy max-min subsampling starting from `start`; ties go to the lowest index.
pub fn farthest_point_sample(points: &[Point], m: usize, start: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if m == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    if m > n {
        return Err(Error::TooFew {
            requested: m,
            available: n,
        });
    }
    if start >= n {
        return Err(Error::InvalidInput(format!(
            "start index {start} out of range for {n} points"
        )));
    }
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut selected = Vec::with_capacity(m);
    let mut current = start;
    loop {
        selected.push(current);
        // Selected points are marked with -1 so duplicates of them still win over them.
        min_d2[current] = -1.0;
        if selected.len() == m {
            break;
        }
        let anchor = points[current];
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, (p, md)) in points.iter().zip(min_d2.iter_mut()).enumerate() {
            if *md < 0.0 {
                continue;
            }
            let d2 = dist2(p, &anchor);
            if d2 < *md {
                *md = d2;
            }
            if *md > best_d2 {
                best_d2 = *md;
                best = i;
            }
        }
        current = best;
    }
    Ok(selected)
}
