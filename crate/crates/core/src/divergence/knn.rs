//! Exact k-th nearest neighbour distances.
//!
//! A k-d tree serves dimensions up to [`KD_TREE_MAX_DIM`]; above that a brute
//! force scan is used. Both compute squared distances with the same
//! coordinate-order summation and prune only when no strictly closer point
//! can exist, so they return bit-identical radii.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const KD_TREE_MAX_DIM: usize = 16;
pub const DEFAULT_MIN_RADIUS: f64 = 1e-12;
const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStrategy {
    /// k-d tree when `dim <= KD_TREE_MAX_DIM`, brute force otherwise.
    Auto,
    KdTree,
    BruteForce,
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate(f64);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

pub struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [f64], dim: usize) -> Self {
        let n = points.len() / dim;
        let mut tree = Self {
            points,
            dim,
            order: (0..n).collect(),
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 1),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    fn coord(&self, i: usize, axis: usize) -> f64 {
        self.points[i * self.dim + axis]
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // widest spread axis
        let axis = (0..self.dim)
            .map(|a| {
                let (lo, hi) = self.order[start..end].iter().fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), &i| {
                        let v = self.coord(i, a);
                        (lo.min(v), hi.max(v))
                    },
                );
                (a, hi - lo)
            })
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(a, _)| a)
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let (pts, dim) = (self.points, self.dim);
        self.order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            pts[i * dim + axis].total_cmp(&pts[j * dim + axis])
        });
        let value = self.coord(self.order[mid], axis);
        self.nodes.push(Node::Split {
            axis,
            value,
            left: 0,
            right: 0,
        });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id]
        {
            *l = left;
            *r = right;
        }
        id
    }

    /// Squared distance from `query` to its `k`-th nearest point, skipping the
    /// point with index `exclude`.
    pub fn kth_dist2(&self, query: &[f64], k: usize, exclude: Option<usize>) -> f64 {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if !self.nodes.is_empty() {
            self.search(0, query, k, exclude, &mut heap);
        }
        if heap.len() < k {
            return f64::INFINITY;
        }
        heap.peek().map_or(f64::INFINITY, |c| c.0)
    }

    fn search(
        &self,
        node: usize,
        query: &[f64],
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let d = dist2(query, self.point(i));
                    if heap.len() < k {
                        heap.push(Candidate(d));
                    } else if d < heap.peek().unwrap().0 {
                        heap.pop();
                        heap.push(Candidate(d));
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, exclude, heap);
                let plane = diff * diff;
                if heap.len() < k || plane < heap.peek().unwrap().0 {
                    self.search(far, query, k, exclude, heap);
                }
            }
        }
    }
}

fn brute_kth_dist2(points: &[f64], dim: usize, i: usize, k: usize, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    let q = &points[i * dim..(i + 1) * dim];
    scratch.extend(
        points
            .chunks(dim)
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, p)| dist2(q, p)),
    );
    let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

/// Distance from each point to its `k`-th nearest neighbour among the other
/// points, clamped below by `min_radius`.
pub fn knn_radii(points: &[f64], dim: usize, k: usize, min_radius: f64) -> Result<Vec<f64>> {
    knn_radii_with(points, dim, k, min_radius, SearchStrategy::Auto)
}

pub fn knn_radii_with(
    points: &[f64],
    dim: usize,
    k: usize,
    min_radius: f64,
    strategy: SearchStrategy,
) -> Result<Vec<f64>> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::invalid("points do not form rows of the given dimension"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let n = points.len() / dim;
    if n <= k {
        return Err(Error::InsufficientSamples {
            needed: k + 1,
            got: n,
        });
    }
    if !(min_radius > 0.0) {
        return Err(Error::invalid("min_radius must be positive"));
    }
    let use_tree = match strategy {
        SearchStrategy::Auto => dim <= KD_TREE_MAX_DIM,
        SearchStrategy::KdTree => true,
        SearchStrategy::BruteForce => false,
    };
    let clamp = |d2: f64| d2.sqrt().max(min_radius);
    let radii = if use_tree {
        let tree = KdTree::new(points, dim);
        let query = |i: usize| clamp(tree.kth_dist2(&points[i * dim..(i + 1) * dim], k, Some(i)));
        #[cfg(feature = "parallel")]
        {
            (0..n).into_par_iter().map(query).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..n).map(query).collect()
        }
    } else {
        let query = |scratch: &mut Vec<f64>, i: usize| {
            clamp(brute_kth_dist2(points, dim, i, k, scratch))
        };
        #[cfg(feature = "parallel")]
        {
            (0..n)
                .into_par_iter()
                .map_init(Vec::new, query)
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            let mut scratch = Vec::new();
            (0..n).map(|i| query(&mut scratch, i)).collect()
        }
    };
    Ok(radii)
}
