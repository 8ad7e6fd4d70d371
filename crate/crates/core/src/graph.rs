//! Spatial index and graph construction.
//!
//! All neighbor queries order candidates by `(squared distance, index)`,
//! so results are exact and platform independent. The brute-force
//! functions are the reference the tree is checked against.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;

use crate::mesh::{MeshCase, Point2};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

const LEAF_SIZE: usize = 8;

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

/// Balanced 2-d tree over a fixed point set.
#[derive(Debug, Clone)]
pub struct KdTree2 {
    points: Vec<Point2>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

fn coord(p: Point2, dim: usize) -> f64 {
    if dim == 0 {
        p.x
    } else {
        p.y
    }
}

impl KdTree2 {
    pub fn build(points: &[Point2]) -> Self {
        assert!(!points.is_empty(), "k-d tree needs at least one point");
        let mut tree = KdTree2 {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        tree.build_node(0, points.len());
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &i in &self.order[start..end] {
            let p = self.points[i];
            for d in 0..2 {
                lo[d] = lo[d].min(coord(p, d));
                hi[d] = hi[d].max(coord(p, d));
            }
        }
        let dim = usize::from(hi[1] - lo[1] > hi[0] - lo[0]);
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coord(pts[a], dim).total_cmp(&coord(pts[b], dim))
        });
        let value = coord(self.points[self.order[mid]], dim);
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    /// The `k` nearest points, closest first; equal distances by index.
    pub fn knn(&self, q: Point2, k: usize) -> Vec<usize> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.knn_rec(0, q, k, &mut best);
        best.into_iter().map(|(_, i)| i).collect()
    }

    fn knn_rec(&self, node: usize, q: Point2, k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = (q.dist_sq(self.points[i]), i);
                    if best.len() == k && !less(cand, best[k - 1]) {
                        continue;
                    }
                    let pos = best.partition_point(|&b| less(b, cand));
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = coord(q, dim) - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.knn_rec(near, q, k, best);
                if best.len() < k || diff * diff <= best[k - 1].0 {
                    self.knn_rec(far, q, k, best);
                }
            }
        }
    }

    /// All points with `‖p − q‖² ≤ r²`, ascending index.
    pub fn within_radius(&self, q: Point2, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_rec(0, q, r * r, &mut out);
        out.sort_unstable();
        out
    }

    fn radius_rec(&self, node: usize, q: Point2, r_sq: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(
                    self.order[start..end]
                        .iter()
                        .copied()
                        .filter(|&i| q.dist_sq(self.points[i]) <= r_sq),
                );
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = coord(q, dim) - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.radius_rec(near, q, r_sq, out);
                if diff * diff <= r_sq {
                    self.radius_rec(far, q, r_sq, out);
                }
            }
        }
    }
}

fn less(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Reference k-NN by full sort.
pub fn brute_knn(points: &[Point2], q: Point2, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| (q.dist_sq(p), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Reference radius query by full scan.
pub fn brute_radius(points: &[Point2], q: Point2, r: f64) -> Vec<usize> {
    let r_sq = r * r;
    (0..points.len())
        .filter(|&i| q.dist_sq(points[i]) <= r_sq)
        .collect()
}

/// Directed graph with edges grouped by destination, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    pub num_nodes: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
}

impl NeighborGraph {
    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &d in &self.dst {
            deg[d] += 1;
        }
        deg
    }
}

/// Uncapped radius neighborhoods (self excluded), kept so the cap can be
/// resampled cheaply.
#[derive(Debug, Clone)]
pub struct RadiusNeighborhoods {
    pub radius: f64,
    pub lists: Vec<Vec<usize>>,
}

impl RadiusNeighborhoods {
    pub fn build(points: &[Point2], r: f64) -> Self {
        let tree = KdTree2::build(points);
        let lists = points
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut n = tree.within_radius(p, r);
                n.retain(|&j| j != i);
                n
            })
            .collect();
        RadiusNeighborhoods { radius: r, lists }
    }

    /// Keeps at most `cap` neighbors per node, sampled without replacement
    /// from a stream keyed by `(seed, node)`.
    pub fn capped(&self, cap: usize, seed: u64) -> NeighborGraph {
        let cap = cap.max(1);
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for (node, list) in self.lists.iter().enumerate() {
            if list.len() > cap {
                let mut rng = stream_rng(seed, Stream::NeighborCap, node as u64, 0);
                let mut picked: Vec<usize> = sample(&mut rng, list.len(), cap)
                    .into_iter()
                    .map(|j| list[j])
                    .collect();
                picked.sort_unstable();
                for s in picked {
                    src.push(s);
                    dst.push(node);
                }
            } else {
                for &s in list {
                    src.push(s);
                    dst.push(node);
                }
            }
        }
        NeighborGraph {
            num_nodes: self.lists.len(),
            src,
            dst,
        }
    }
}

/// Radius graph without self-loops; neighborhoods larger than `max_neighbors`
/// are subsampled deterministically from `seed`.
pub fn radius_graph(points: &[Point2], r: f64, max_neighbors: usize, seed: u64) -> NeighborGraph {
    RadiusNeighborhoods::build(points, r).capped(max_neighbors, seed)
}

/// Directed surface → volume graph: every query point receives exactly `k`
/// edges from its nearest surface points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    pub k: usize,
    /// Case point indices of the query (volume) nodes.
    pub volume: Vec<usize>,
    /// Positions into the case's surface list; `k` per volume node, nearest first.
    pub surface_slots: Vec<usize>,
}

impl BipartiteGraph {
    pub fn num_edges(&self) -> usize {
        self.surface_slots.len()
    }

    /// Destination position (into `volume`) of every edge.
    pub fn dst(&self) -> Vec<usize> {
        (0..self.surface_slots.len()).map(|e| e / self.k).collect()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.surface_slots[v * self.k..(v + 1) * self.k]
    }
}

/// k-NN index over the surface of one case.
#[derive(Debug, Clone)]
pub struct SurfaceIndex {
    tree: KdTree2,
}

impl SurfaceIndex {
    pub fn new(case: &MeshCase) -> Self {
        SurfaceIndex {
            tree: KdTree2::build(&case.surface_points()),
        }
    }

    pub fn surface_len(&self) -> usize {
        self.tree.len()
    }

    /// Surf2Vol edges for the listed case points.
    pub fn graph_for(&self, case: &MeshCase, volume: &[usize], k: usize) -> Result<BipartiteGraph> {
        if k == 0 || self.tree.len() < k {
            return Err(Error::Config(format!(
                "surface has {} points, fewer than k = {k}",
                self.tree.len()
            )));
        }
        let mut slots = Vec::with_capacity(volume.len() * k);
        for &v in volume {
            slots.extend(self.tree.knn(case.points[v], k));
        }
        Ok(BipartiteGraph {
            k,
            volume: volume.to_vec(),
            surface_slots: slots,
        })
    }
}

/// Surf2Vol graph over every point of the case, surface points included.
pub fn surf2vol_graph(case: &MeshCase, k: usize) -> Result<BipartiteGraph> {
    let all: Vec<usize> = (0..case.len()).collect();
    SurfaceIndex::new(case).graph_for(case, &all, k)
}

/// `[y − x, ‖y − x‖]`.
pub fn edge_geometry(y: Point2, x: Point2) -> [f64; 3] {
    let d = y - x;
    [d.x, d.y, d.norm()]
}

/// Debug dump, one `src dst f1 f2 ...` line per edge.
pub fn write_edge_list(
    path: impl AsRef<Path>,
    src: &[usize],
    dst: &[usize],
    features: Option<(&[f64], usize)>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for e in 0..src.len() {
        let _ = write!(out, "{} {}", src[e], dst[e]);
        if let Some((f, w)) = features {
            for v in &f[e * w..(e + 1) * w] {
                let _ = write!(out, " {v}");
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Point2> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn single_point_tree() {
        let t = KdTree2::build(&[Point2::new(0.3, 0.3)]);
        assert_eq!(t.knn(Point2::new(5.0, -2.0), 1), vec![0]);
        assert_eq!(t.knn(Point2::new(5.0, -2.0), 4), vec![0]);
        assert_eq!(t.within_radius(Point2::new(0.3, 0.4), 0.2), vec![0]);
    }

    #[test]
    fn knn_matches_brute_force() {
        let pts = cloud(1000, 1);
        let t = KdTree2::build(&pts);
        for q in cloud(100, 2) {
            assert_eq!(t.knn(q, 8), brute_knn(&pts, q, 8));
            assert_eq!(t.within_radius(q, 0.1), brute_radius(&pts, q, 0.1));
        }
    }

    #[test]
    fn duplicates_come_before_farther_points() {
        let mut pts = cloud(200, 3);
        let dup = Point2::new(0.25, -0.5);
        for _ in 0..5 {
            pts.push(dup);
        }
        pts.insert(17, dup);
        let t = KdTree2::build(&pts);
        let got = t.knn(Point2::new(0.25, -0.5), 6);
        let mut want: Vec<usize> = (0..pts.len()).filter(|&i| pts[i] == dup).collect();
        want.sort_unstable();
        assert_eq!(got, want);
        assert_eq!(got, brute_knn(&pts, dup, 6));
    }

    #[test]
    fn collinear_radius_graph() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(0.04, 0.0),
            Point2::new(0.08, 0.0),
        ];
        let g = radius_graph(&pts, 0.05, 4, 0);
        assert_eq!(g.in_degrees(), vec![1, 2, 1]);
        assert!(g.src.iter().zip(&g.dst).all(|(s, d)| s != d));
    }

    #[test]
    fn cap_limits_degree_and_respects_radius() {
        let mut pts = vec![Point2::ZERO];
        for i in 0..10 {
            let a = i as f64 * 0.6;
            pts.push(Point2::new(0.03 * a.cos(), 0.03 * a.sin()));
        }
        let g = radius_graph(&pts, 0.05, 4, 9);
        let deg = g.in_degrees();
        assert_eq!(deg[0], 4);
        assert!(deg.iter().all(|&d| d <= 4));
        for (&s, &d) in g.src.iter().zip(&g.dst) {
            assert!(pts[s].dist_sq(pts[d]) <= 0.05 * 0.05);
        }
        assert_eq!(g, radius_graph(&pts, 0.05, 4, 9));
    }

    #[test]
    fn edge_geometry_examples() {
        let x = Point2::new(1.0, 2.0);
        assert_eq!(edge_geometry(x, x), [0.0, 0.0, 0.0]);
        assert_eq!(edge_geometry(Point2::new(4.0, 6.0), x), [3.0, 4.0, 5.0]);
        let a = edge_geometry(Point2::new(-0.3, 0.9), x);
        let b = edge_geometry(x, Point2::new(-0.3, 0.9));
        assert_eq!([a[0], a[1], a[2]], [-b[0], -b[1], b[2]]);
    }
}
