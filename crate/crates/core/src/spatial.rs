//! Nearest-neighbour search and ball-search stencil selection.
//!
//! All distances are Euclidean distances in the embedding space. Queries
//! work on squared distances so that a ball whose radius is taken from a
//! neighbour distance contains that neighbour exactly, without a
//! `sqrt`/square round trip.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};

const LEAF_SIZE: usize = 8;

#[inline]
pub fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// A query hit: point index and squared distance to the query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.dist2.sqrt()
    }

    /// Orders by distance, then by ascending index.
    pub fn cmp_by_distance(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_by_distance(other)
    }
}

#[derive(Clone, Debug)]
enum KdNode {
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

/// Static 3-d tree over a point set. Immutable once built; queries take
/// `&self` and may run concurrently.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Point>,
    order: Vec<usize>,
    nodes: Vec<KdNode>,
}

impl KdTree {
    pub fn new(points: &[Point]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::arg("cannot index an empty point set"));
        }
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        tree.build(0, points.len());
        Ok(tree)
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
            self.nodes.push(KdNode::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for d in 0..3 {
                lo[d] = lo[d].min(self.points[i][d]);
                hi[d] = hi[d].max(self.points[i][d]);
            }
        }
        let dim = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][dim].total_cmp(&points[b][dim])
        });
        let value = self.points[self.order[mid]][dim];
        self.nodes.push(KdNode::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = KdNode::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` nearest points to `query`, sorted by distance with ties
    /// broken by ascending index.
    pub fn knn(&self, query: &Point, k: usize) -> Vec<Neighbor> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, query, k, &mut heap);
        let mut out = heap.into_vec();
        out.sort_unstable();
        out
    }

    fn knn_rec(&self, node: usize, q: &Point, k: usize, heap: &mut BinaryHeap<Neighbor>) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = Neighbor {
                        index: i,
                        dist2: dist2(q, &self.points[i]),
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if let Some(worst) = heap.peek() {
                        if cand < *worst {
                            heap.pop();
                            heap.push(cand);
                        }
                    }
                }
            }
            KdNode::Split {
                dim,
                value,
                left,
                right,
            } => {
                let delta = q[dim] - value;
                let (near, far) = if delta < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.knn_rec(near, q, k, heap);
                // Equal-distance subtrees are still visited so that the
                // index tie-break is honoured.
                let visit_far = heap.len() < k
                    || heap.peek().is_some_and(|worst| delta * delta <= worst.dist2);
                if visit_far {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }

    /// Calls `f(index, dist2)` for every point with squared distance
    /// `<= radius2` from `query`, in unspecified order.
    pub fn for_each_within(&self, query: &Point, radius2: f64, mut f: impl FnMut(usize, f64)) {
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            match self.nodes[node] {
                KdNode::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        let d2 = dist2(query, &self.points[i]);
                        if d2 <= radius2 {
                            f(i, d2);
                        }
                    }
                }
                KdNode::Split {
                    dim,
                    value,
                    left,
                    right,
                } => {
                    let delta = query[dim] - value;
                    let (near, far) = if delta < 0.0 {
                        (left, right)
                    } else {
                        (right, left)
                    };
                    if delta * delta <= radius2 {
                        stack.push(far);
                    }
                    stack.push(near);
                }
            }
        }
    }

    /// All points within squared radius `radius2` of `query`, sorted by
    /// distance then index.
    pub fn within(&self, query: &Point, radius2: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        self.for_each_within(query, radius2, |index, dist2| {
            out.push(Neighbor { index, dist2 })
        });
        out.sort_unstable();
        out
    }
}

/// Spatial index over a point cloud.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    tree: KdTree,
}

pub fn build_index(cloud: &PointCloud) -> Result<SpatialIndex> {
    Ok(SpatialIndex {
        tree: KdTree::new(cloud.points())?,
    })
}

impl SpatialIndex {
    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn knn(&self, query: &Point, k: usize) -> Vec<Neighbor> {
        self.tree.knn(query, k)
    }

    pub fn within(&self, query: &Point, radius2: f64) -> Vec<Neighbor> {
        self.tree.within(query, radius2)
    }
}

/// Index set of one stencil. `indices[0]` is the center; entries are sorted
/// by distance from the center, ties by node index.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    pub center: usize,
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
    /// Distance from the center to the farthest of the initial neighbours.
    pub h_max: f64,
    /// Radius factor the stencil was selected with.
    pub tau: f64,
}

impl Stencil {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.tau * self.h_max
    }
}

/// Ball-search stencil: the `n` nearest neighbours of node `i` (the node
/// itself included) fix `h_max`; the stencil is every node within
/// `tau * h_max` of node `i`.
pub fn select_stencil(index: &SpatialIndex, i: usize, n: usize, tau: f64) -> Result<Stencil> {
    let total = index.len();
    if i >= total {
        return Err(Error::arg(format!("node {i} out of range for {total} nodes")));
    }
    if n == 0 || n > total {
        return Err(Error::arg(format!(
            "initial stencil size {n} must be in 1..={total}"
        )));
    }
    if !(tau >= 1.0) || !tau.is_finite() {
        return Err(Error::arg(format!("radius factor tau = {tau} must be >= 1")));
    }
    let center = index.tree.points()[i];
    let nearest = index.knn(&center, n);
    let h2_max = nearest.last().map_or(0.0, |nb| nb.dist2);
    let hits = index.within(&center, tau * tau * h2_max);
    Ok(stencil_from_hits(i, hits, h2_max.sqrt(), tau))
}

fn stencil_from_hits(center: usize, mut hits: Vec<Neighbor>, h_max: f64, tau: f64) -> Stencil {
    // The center sits at distance zero; make sure it leads even if another
    // node coincides with it.
    if let Some(pos) = hits.iter().position(|nb| nb.index == center) {
        let c = hits.remove(pos);
        hits.insert(0, c);
    }
    Stencil {
        center,
        indices: hits.iter().map(|nb| nb.index).collect(),
        distances: hits.iter().map(|nb| nb.distance()).collect(),
        h_max,
        tau,
    }
}

/// Initial stencil size: the dimension of bivariate polynomials of total
/// degree `degree`.
pub fn default_initial_size(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}
