//! Median-split kd-tree over a flat coordinate buffer.
//!
//! Queries are exact: the open-ball predicate `|p − q| < r` is evaluated on
//! every candidate, and whole subtrees are taken only when their bounding
//! box lies strictly inside the ball.

use crate::linalg::{dist2, KahanSum};

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
struct Node {
    lo: usize,
    hi: usize,
    // children indices, usize::MAX for leaves
    left: usize,
    right: usize,
    bbox_min: Vec<f64>,
    bbox_max: Vec<f64>,
    weight: f64,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    // points permuted into tree order
    coords: Vec<f64>,
    weights: Vec<f64>,
    // original index of each tree slot
    index: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    /// Build over `coords` (row-major, `dim` columns). Weights default to 1.
    pub fn build(coords: &[f64], dim: usize, weights: Option<&[f64]>) -> Self {
        assert!(dim > 0 && coords.len().is_multiple_of(dim));
        let n = coords.len() / dim;
        let mut index: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::new();
        if n > 0 {
            build_rec(coords, dim, &mut index, 0, n, &mut nodes, weights);
        }
        let mut tc = Vec::with_capacity(coords.len());
        let mut tw = Vec::with_capacity(n);
        for &i in &index {
            tc.extend_from_slice(&coords[i * dim..(i + 1) * dim]);
            tw.push(weights.map_or(1.0, |w| w[i]));
        }
        KdTree {
            dim,
            coords: tc,
            weights: tw,
            index,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn slot(&self, s: usize) -> &[f64] {
        &self.coords[s * self.dim..(s + 1) * self.dim]
    }

    /// Visit every point strictly inside `B(q, r)` as `(original index, coords)`.
    pub fn for_each_in_ball<F: FnMut(usize, &[f64])>(&self, q: &[f64], r: f64, mut f: F) {
        if self.nodes.is_empty() {
            return;
        }
        let r2 = r * r;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if box_min_dist2(q, &node.bbox_min, &node.bbox_max) >= r2 {
                continue;
            }
            if node.left == usize::MAX || box_max_dist2(q, &node.bbox_min, &node.bbox_max) < r2 {
                for s in node.lo..node.hi {
                    let p = self.slot(s);
                    if dist2(p, q) < r2 {
                        f(self.index[s], p);
                    }
                }
                continue;
            }
            stack.push(node.right);
            stack.push(node.left);
        }
    }

    /// Original indices of all points strictly inside `B(q, r)`, unordered.
    pub fn ball_indices(&self, q: &[f64], r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_in_ball(q, r, |i, _| out.push(i));
        out
    }

    /// Total weight strictly inside `B(q, r)`; subtrees inside the ball use
    /// their precomputed sums.
    pub fn ball_weight(&self, q: &[f64], r: f64) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let r2 = r * r;
        let mut acc = KahanSum::default();
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if box_min_dist2(q, &node.bbox_min, &node.bbox_max) >= r2 {
                continue;
            }
            if box_max_dist2(q, &node.bbox_min, &node.bbox_max) < r2 {
                acc.add(node.weight);
                continue;
            }
            if node.left == usize::MAX {
                for s in node.lo..node.hi {
                    if dist2(self.slot(s), q) < r2 {
                        acc.add(self.weights[s]);
                    }
                }
                continue;
            }
            stack.push(node.right);
            stack.push(node.left);
        }
        acc.value()
    }

    /// Nearest point as `(original index, distance)`; ties go to the lower
    /// original index.
    pub fn nearest(&self, q: &[f64]) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, q, &mut best);
        Some((best.0, best.1.sqrt()))
    }

    fn nearest_rec(&self, ni: usize, q: &[f64], best: &mut (usize, f64)) {
        let node = &self.nodes[ni];
        if box_min_dist2(q, &node.bbox_min, &node.bbox_max) > best.1 {
            return;
        }
        if node.left == usize::MAX {
            for s in node.lo..node.hi {
                let d = dist2(self.slot(s), q);
                let idx = self.index[s];
                if d < best.1 || (d == best.1 && idx < best.0) {
                    *best = (idx, d);
                }
            }
            return;
        }
        let l = &self.nodes[node.left];
        let r = &self.nodes[node.right];
        let dl = box_min_dist2(q, &l.bbox_min, &l.bbox_max);
        let dr = box_min_dist2(q, &r.bbox_min, &r.bbox_max);
        if dl <= dr {
            self.nearest_rec(node.left, q, best);
            self.nearest_rec(node.right, q, best);
        } else {
            self.nearest_rec(node.right, q, best);
            self.nearest_rec(node.left, q, best);
        }
    }
}

fn build_rec(
    coords: &[f64],
    dim: usize,
    index: &mut [usize],
    lo: usize,
    hi: usize,
    nodes: &mut Vec<Node>,
    weights: Option<&[f64]>,
) -> usize {
    let mut bmin = vec![f64::INFINITY; dim];
    let mut bmax = vec![f64::NEG_INFINITY; dim];
    let mut wsum = KahanSum::default();
    for &i in &index[lo..hi] {
        let p = &coords[i * dim..(i + 1) * dim];
        for k in 0..dim {
            bmin[k] = bmin[k].min(p[k]);
            bmax[k] = bmax[k].max(p[k]);
        }
        wsum.add(weights.map_or(1.0, |w| w[i]));
    }
    let id = nodes.len();
    nodes.push(Node {
        lo,
        hi,
        left: usize::MAX,
        right: usize::MAX,
        bbox_min: bmin.clone(),
        bbox_max: bmax.clone(),
        weight: wsum.value(),
    });
    if hi - lo <= LEAF_SIZE {
        return id;
    }
    let mut axis = 0;
    for k in 1..dim {
        if bmax[k] - bmin[k] > bmax[axis] - bmin[axis] {
            axis = k;
        }
    }
    if bmax[axis] - bmin[axis] <= 0.0 {
        // all points coincide; keep as a (large) leaf
        return id;
    }
    let mid = lo + (hi - lo) / 2;
    index[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
        coords[a * dim + axis]
            .total_cmp(&coords[b * dim + axis])
            .then(a.cmp(&b))
    });
    let left = build_rec(coords, dim, index, lo, mid, nodes, weights);
    let right = build_rec(coords, dim, index, mid, hi, nodes, weights);
    nodes[id].left = left;
    nodes[id].right = right;
    id
}

#[inline]
fn box_min_dist2(q: &[f64], bmin: &[f64], bmax: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..q.len() {
        let d = if q[k] < bmin[k] {
            bmin[k] - q[k]
        } else if q[k] > bmax[k] {
            q[k] - bmax[k]
        } else {
            0.0
        };
        s += d * d;
    }
    s
}

#[inline]
fn box_max_dist2(q: &[f64], bmin: &[f64], bmax: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..q.len() {
        let d = (q[k] - bmin[k]).abs().max((bmax[k] - q[k]).abs());
        s += d * d;
    }
    s
}
