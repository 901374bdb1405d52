//! Node-set generators: icosahedral, Hammersley and Poisson-disk (weighted
//! sample elimination).

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{NodeFamily, Point, PointCloud, SurfaceModel, TORUS_MAJOR, TORUS_MINOR};
use crate::error::{Error, Result};
use crate::spatial::KdTree;

pub const MAX_ICOSAHEDRAL_LEVEL: u32 = 9;

/// Candidate oversampling factor for weighted sample elimination.
const WSE_OVERSAMPLING: usize = 8;
const WSE_ALPHA: i32 = 8;
const WSE_LIMIT_GAMMA: f64 = 1.5;
const WSE_LIMIT_BETA: f64 = 0.65;

pub fn icosahedral_count(level: u32) -> usize {
    10 * 4usize.pow(level) + 2
}

/// Subdivision level producing exactly `n` icosahedral nodes, if any.
pub fn icosahedral_level_for(n: usize) -> Option<u32> {
    (0..=MAX_ICOSAHEDRAL_LEVEL).find(|&k| icosahedral_count(k) == n)
}

/// Icosahedron subdivided `level` times, every vertex projected radially
/// onto the unit sphere.
pub fn generate_icosahedral(level: u32) -> Result<PointCloud> {
    if level > MAX_ICOSAHEDRAL_LEVEL {
        return Err(Error::Capacity(format!(
            "icosahedral level {level} exceeds the limit {MAX_ICOSAHEDRAL_LEVEL}"
        )));
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Point> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3 / 2);
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    debug_assert_eq!(verts.len(), icosahedral_count(level));
    PointCloud::new(verts, NodeFamily::Icosahedral)
}

fn van_der_corput(i: u64) -> f64 {
    i.reverse_bits() as f64 / 2f64.powi(64)
}

/// Hammersley points on the unit sphere: `s_i` is the base-2 radical
/// inverse of `i`, `t_i = (i + 1/2)/n`, mapped by the equal-area
/// cylindrical map `z = 2t - 1`, `theta = 2 pi s`.
pub fn generate_hammersley(n: usize) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::arg("Hammersley point count must be positive"));
    }
    let points = (0..n)
        .map(|i| {
            let s = van_der_corput(i as u64);
            let t = (i as f64 + 0.5) / n as f64;
            let z = 2.0 * t - 1.0;
            let rxy = (1.0 - z * z).max(0.0).sqrt();
            let theta = 2.0 * PI * s;
            Vector3::new(rxy * theta.cos(), rxy * theta.sin(), z)
        })
        .collect();
    PointCloud::new(points, NodeFamily::Hammersley)
}

fn sample_uniform(surface: SurfaceModel, rng: &mut ChaCha8Rng) -> Point {
    match surface {
        SurfaceModel::UnitSphere => loop {
            let v = Vector3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            let n = v.norm();
            if n > 1e-8 {
                break v / n;
            }
        },
        SurfaceModel::Torus => {
            let u = 2.0 * PI * rng.random::<f64>();
            // area element is proportional to R + r cos v
            let v = loop {
                let v = 2.0 * PI * rng.random::<f64>();
                let accept = rng.random::<f64>() * (TORUS_MAJOR + TORUS_MINOR);
                if accept < TORUS_MAJOR + TORUS_MINOR * v.cos() {
                    break v;
                }
            };
            let w = TORUS_MAJOR + TORUS_MINOR * v.cos();
            Vector3::new(w * u.cos(), w * u.sin(), TORUS_MINOR * v.sin())
        }
    }
}

/// Poisson-disk nodes on the torus by weighted sample elimination.
pub fn generate_poisson_torus(n_target: usize, seed: u64) -> Result<PointCloud> {
    generate_poisson(SurfaceModel::Torus, n_target, seed)
}

/// Weighted sample elimination: draw `8 n` area-uniform candidates, then
/// greedily drop the candidate with the largest crowding weight until `n`
/// remain.
pub fn generate_poisson(surface: SurfaceModel, n_target: usize, seed: u64) -> Result<PointCloud> {
    if n_target < 50 {
        return Err(Error::arg(format!(
            "Poisson node count {n_target} is below the minimum of 50"
        )));
    }
    let m = WSE_OVERSAMPLING * n_target;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<Point> = (0..m).map(|_| sample_uniform(surface, &mut rng)).collect();
    let tree = KdTree::new(&candidates)?;

    let r_max = (surface.area() / (2.0 * 3f64.sqrt() * n_target as f64)).sqrt();
    let d_max = 2.0 * r_max;
    let ratio = n_target as f64 / m as f64;
    let d_min = d_max * (1.0 - ratio.powf(WSE_LIMIT_GAMMA)) * WSE_LIMIT_BETA;
    let d_max2 = d_max * d_max;
    let weight = |d2: f64| {
        let d = d2.max(d_min * d_min).sqrt();
        (1.0 - d / d_max).powi(WSE_ALPHA)
    };

    let mut weights = vec![0.0; m];
    for (i, w) in weights.iter_mut().enumerate() {
        tree.for_each_within(&candidates[i], d_max2, |j, d2| {
            if j != i {
                *w += weight(d2);
            }
        });
    }
    let mut heap = IndexedMaxHeap::new(weights);
    let mut alive = vec![true; m];
    let mut remaining = m;
    while remaining > n_target {
        let i = heap
            .pop()
            .ok_or_else(|| Error::Internal("candidate pool exhausted".into()))?;
        alive[i] = false;
        remaining -= 1;
        tree.for_each_within(&candidates[i], d_max2, |j, d2| {
            if j != i && alive[j] {
                heap.decrease(j, weight(d2));
            }
        });
    }
    let points = candidates
        .into_iter()
        .zip(alive)
        .filter_map(|(p, keep)| keep.then_some(p))
        .collect();
    PointCloud::new(points, NodeFamily::PoissonDisk)
}

/// Generates `n` nodes of `family` on `surface`.
pub fn generate_nodes(
    surface: SurfaceModel,
    family: NodeFamily,
    n: usize,
    seed: u64,
) -> Result<PointCloud> {
    match (surface, family) {
        (SurfaceModel::UnitSphere, NodeFamily::Icosahedral) => {
            let level = icosahedral_level_for(n).ok_or_else(|| {
                Error::arg(format!("{n} is not an icosahedral node count 10*4^k + 2"))
            })?;
            generate_icosahedral(level)
        }
        (SurfaceModel::UnitSphere, NodeFamily::Hammersley) => generate_hammersley(n),
        (_, NodeFamily::PoissonDisk) => generate_poisson(surface, n, seed),
        (_, NodeFamily::FromFile) => Err(Error::arg("file nodes cannot be generated")),
        (SurfaceModel::Torus, fam) => Err(Error::arg(format!(
            "{} nodes are only available on the sphere",
            fam.name()
        ))),
    }
}

/// Binary max-heap over item ids `0..n` with key decrease.
struct IndexedMaxHeap {
    keys: Vec<f64>,
    heap: Vec<usize>,
    pos: Vec<usize>,
}

impl IndexedMaxHeap {
    fn new(keys: Vec<f64>) -> Self {
        let n = keys.len();
        let mut h = IndexedMaxHeap {
            keys,
            heap: (0..n).collect(),
            pos: (0..n).collect(),
        };
        for i in (0..n / 2).rev() {
            h.sift_down(i);
        }
        h
    }

    fn above(&self, a: usize, b: usize) -> bool {
        let (ia, ib) = (self.heap[a], self.heap[b]);
        match self.keys[ia].total_cmp(&self.keys[ib]) {
            std::cmp::Ordering::Equal => ia < ib,
            o => o == std::cmp::Ordering::Greater,
        }
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.heap.swap(a, b);
        self.pos[self.heap[a]] = a;
        self.pos[self.heap[b]] = b;
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.heap.len();
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut best = i;
            if l < n && self.above(l, best) {
                best = l;
            }
            if r < n && self.above(r, best) {
                best = r;
            }
            if best == i {
                return;
            }
            self.swap(i, best);
            i = best;
        }
    }

    fn pop(&mut self) -> Option<usize> {
        let last = self.heap.len().checked_sub(1)?;
        self.swap(0, last);
        let top = self.heap.pop()?;
        self.pos[top] = usize::MAX;
        if !self.heap.is_empty() {
            self.sift_down(0);
        }
        Some(top)
    }

    fn decrease(&mut self, item: usize, by: f64) {
        let p = self.pos[item];
        if p == usize::MAX {
            return;
        }
        self.keys[item] -= by;
        self.sift_down(p);
    }
}
