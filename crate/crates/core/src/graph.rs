//! Exact k-nearest-neighbour search and the row-stochastic kNN transition
//! matrix built from it.
//!
//! Neighbours are ranked by `(distance, index)`, so results are fully
//! determined by the data. Euclidean search compares squared distances.
//! Large low-dimensional Euclidean problems go through a kd-tree whose
//! pruning test can never discard a point the exhaustive scan would keep,
//! so both paths return identical lists.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{CnsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Euclidean,
    /// `1 - <a, b> / (|a| |b|)`.
    Cosine,
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::Cosine => "cosine",
        })
    }
}

impl FromStr for DistanceMetric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(DistanceMetric::Euclidean),
            "cosine" => Ok(DistanceMetric::Cosine),
            other => Err(format!("unknown metric '{other}' (expected euclidean or cosine)")),
        }
    }
}

/// Row-major point set with whatever per-row data the metric needs.
pub(crate) struct Points<'a> {
    values: &'a [f64],
    d: usize,
    metric: DistanceMetric,
    norms: Vec<f64>,
}

/// Row norms at or below this fraction of the largest count as zero.
const ZERO_NORM_RELATIVE: f64 = 1e-12;

impl<'a> Points<'a> {
    pub(crate) fn new(data: &'a DataMatrix, metric: DistanceMetric) -> Result<Self> {
        let d = data.d();
        let values = data.as_slice();
        let norms = match metric {
            DistanceMetric::Euclidean => Vec::new(),
            DistanceMetric::Cosine => {
                let norms: Vec<f64> = values
                    .chunks_exact(d)
                    .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
                    .collect();
                // Rows at rounding-error distance from the origin (such as a
                // point at the column means after centring) have no usable
                // direction either.
                let largest = norms.iter().fold(0.0f64, |m, &v| m.max(v));
                let floor = ZERO_NORM_RELATIVE * largest;
                if let Some(row) = norms.iter().position(|&nrm| nrm <= floor) {
                    return Err(CnsError::ZeroNormRow { row });
                }
                norms
            }
        };
        Ok(Points { values, d, metric, norms })
    }

    pub(crate) fn n(&self) -> usize {
        self.values.len() / self.d
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    /// Monotone ranking key: squared distance for Euclidean, the distance
    /// itself for cosine.
    #[inline]
    pub(crate) fn key(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row(i), self.row(j));
        match self.metric {
            DistanceMetric::Euclidean => sq_dist(a, b),
            DistanceMetric::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                1.0 - dot / (self.norms[i] * self.norms[j])
            }
        }
    }

    pub(crate) fn distance(&self, i: usize, j: usize) -> f64 {
        match self.metric {
            DistanceMetric::Euclidean => self.key(i, j).sqrt(),
            DistanceMetric::Cosine => self.key(i, j),
        }
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        s += t * t;
    }
    s
}

/// Bounded list of the best `k` `(key, index)` pairs seen so far, kept sorted.
struct Nearest {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl Nearest {
    fn new(k: usize) -> Self {
        Nearest {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn worst(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.k - 1].0
        }
    }

    #[inline]
    fn offer(&mut self, key: f64, idx: usize) {
        if self.items.len() == self.k {
            let (wk, wi) = self.items[self.k - 1];
            if key > wk || (key == wk && idx > wi) {
                return;
            }
        }
        let pos = self
            .items
            .partition_point(|&(k2, i2)| k2 < key || (k2 == key && i2 < idx));
        self.items.insert(pos, (key, idx));
        self.items.truncate(self.k);
    }

    fn into_indices(self) -> Vec<usize> {
        self.items.into_iter().map(|(_, i)| i).collect()
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(CnsError::NeighbourCount { k, n });
    }
    Ok(())
}

fn scan_row(points: &Points<'_>, query: usize, k: usize) -> Vec<usize> {
    let mut best = Nearest::new(k);
    for j in 0..points.n() {
        if j != query {
            best.offer(points.key(query, j), j);
        }
    }
    best.into_indices()
}

/// The `k` nearest points to row `query`, excluding itself, ordered by
/// `(distance, index)`.
pub fn knn_indices(
    data: &DataMatrix,
    query: usize,
    k: usize,
    metric: DistanceMetric,
) -> Result<Vec<usize>> {
    let n = data.n();
    check_k(k, n)?;
    if query >= n {
        return Err(CnsError::IndexOutOfRange { index: query, n });
    }
    let points = Points::new(data, metric)?;
    Ok(scan_row(&points, query, k))
}

const KD_MIN_POINTS: usize = 2048;
const KD_MAX_DIM: usize = 32;
const KD_LEAF: usize = 16;

/// Kd-tree over row indices for exact Euclidean kNN.
struct KdTree<'a> {
    points: &'a Points<'a>,
    order: Vec<usize>,
    nodes: Vec<KdNode>,
}

enum KdNode {
    Leaf { lo: usize, hi: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

impl<'a> KdTree<'a> {
    fn build(points: &'a Points<'a>) -> Self {
        let mut tree = KdTree {
            points,
            order: (0..points.n()).collect(),
            nodes: Vec::new(),
        };
        tree.build_node(0, points.n());
        tree
    }

    fn build_node(&mut self, lo: usize, hi: usize) -> usize {
        let id = self.nodes.len();
        if hi - lo <= KD_LEAF {
            self.nodes.push(KdNode::Leaf { lo, hi });
            return id;
        }
        let d = self.points.d;
        let mut dim = 0;
        let mut best_spread = f64::NEG_INFINITY;
        for c in 0..d {
            let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[lo..hi] {
                let v = self.points.row(i)[c];
                mn = mn.min(v);
                mx = mx.max(v);
            }
            if mx - mn > best_spread {
                best_spread = mx - mn;
                dim = c;
            }
        }
        let mid = lo + (hi - lo) / 2;
        let pts = self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            pts.row(a)[dim].total_cmp(&pts.row(b)[dim]).then(a.cmp(&b))
        });
        let value = pts.row(self.order[mid])[dim];
        self.nodes.push(KdNode::Leaf { lo: 0, hi: 0 });
        let left = self.build_node(lo, mid);
        let right = self.build_node(mid, hi);
        self.nodes[id] = KdNode::Split { dim, value, left, right };
        id
    }

    fn query(&self, q: usize, k: usize) -> Vec<usize> {
        let mut best = Nearest::new(k);
        self.visit(0, q, &mut best);
        best.into_indices()
    }

    fn visit(&self, node: usize, q: usize, best: &mut Nearest) {
        match self.nodes[node] {
            KdNode::Leaf { lo, hi } => {
                for &j in &self.order[lo..hi] {
                    if j != q {
                        best.offer(self.points.key(q, j), j);
                    }
                }
            }
            KdNode::Split { dim, value, left, right } => {
                let qv = self.points.row(q)[dim];
                let diff = qv - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.visit(near, q, best);
                // Rounding is monotone, so the computed squared distance to any
                // point beyond the plane is at least diff². Equal keys must
                // still be visited for the index tie-break.
                if diff * diff <= best.worst() {
                    self.visit(far, q, best);
                }
            }
        }
    }
}

/// Neighbour lists for every row, each ordered by `(distance, index)`.
///
/// Lists for a smaller `k` are prefixes of these, so one table serves a whole
/// grid of neighbour counts.
#[derive(Debug, Clone)]
pub struct KnnTable {
    n: usize,
    k: usize,
    indices: Vec<usize>,
}

impl KnnTable {
    pub fn compute(data: &DataMatrix, k: usize, metric: DistanceMetric) -> Result<Self> {
        let n = data.n();
        check_k(k, n)?;
        let points = Points::new(data, metric)?;
        let use_tree = metric == DistanceMetric::Euclidean && n >= KD_MIN_POINTS && data.d() <= KD_MAX_DIM;
        let rows: Vec<Vec<usize>> = if use_tree {
            let tree = KdTree::build(&points);
            (0..n).into_par_iter().map(|i| tree.query(i, k)).collect()
        } else {
            (0..n).into_par_iter().map(|i| scan_row(&points, i, k)).collect()
        };
        Ok(KnnTable {
            n,
            k,
            indices: rows.into_iter().flatten().collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The `k` nearest neighbours of row `i`, nearest first.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    /// Transition matrix using the first `k` neighbours of every row.
    pub fn transition_matrix(&self, k: usize) -> Result<TransitionMatrix> {
        if k == 0 || k > self.k {
            return Err(CnsError::NeighbourCount { k, n: self.n });
        }
        let lists = (0..self.n).map(|i| self.row(i)[..k].to_vec()).collect();
        TransitionMatrix::from_neighbour_lists(self.n, k, lists)
    }
}

/// Sparse row-stochastic matrix with weight `1/k` on each of the `k`
/// neighbours of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    k: usize,
    /// Row neighbour lists, ascending index within each row.
    neighbours: Vec<usize>,
    in_offsets: Vec<usize>,
    in_sources: Vec<usize>,
    col_l1: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds the matrix from explicit neighbour lists.
    ///
    /// Each list must hold `k` distinct in-range indices. A row may list
    /// itself; graphs produced by [`build_knn_graph`] never do.
    pub fn from_neighbour_lists(n: usize, k: usize, lists: Vec<Vec<usize>>) -> Result<Self> {
        if lists.len() != n {
            return Err(CnsError::InvalidGraph(format!("{} rows for n = {n}", lists.len())));
        }
        if k == 0 || k > n {
            return Err(CnsError::NeighbourCount { k, n });
        }
        let mut neighbours = Vec::with_capacity(n * k);
        let mut in_degree = vec![0usize; n];
        for (i, mut row) in lists.into_iter().enumerate() {
            if row.len() != k {
                return Err(CnsError::InvalidGraph(format!(
                    "row {i} has {} neighbours, expected {k}",
                    row.len()
                )));
            }
            row.sort_unstable();
            if row.windows(2).any(|w| w[0] == w[1]) {
                return Err(CnsError::InvalidGraph(format!("row {i} repeats a neighbour")));
            }
            if let Some(&bad) = row.iter().find(|&&j| j >= n) {
                return Err(CnsError::IndexOutOfRange { index: bad, n });
            }
            for &j in &row {
                in_degree[j] += 1;
            }
            neighbours.extend(row);
        }
        let mut in_offsets = Vec::with_capacity(n + 1);
        in_offsets.push(0);
        for deg in &in_degree {
            in_offsets.push(in_offsets.last().unwrap() + deg);
        }
        let mut fill = in_offsets.clone();
        let mut in_sources = vec![0usize; n * k];
        for i in 0..n {
            for &j in &neighbours[i * k..(i + 1) * k] {
                in_sources[fill[j]] = i;
                fill[j] += 1;
            }
        }
        let col_l1 = in_degree.iter().map(|&d| d as f64 / k as f64).collect();
        Ok(TransitionMatrix {
            n,
            k,
            neighbours,
            in_offsets,
            in_sources,
            col_l1,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Value of every stored entry.
    pub fn weight(&self) -> f64 {
        1.0 / self.k as f64
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.neighbours[i * self.k..(i + 1) * self.k]
    }

    /// Rows that list `j` as a neighbour, ascending.
    pub fn in_neighbours(&self, j: usize) -> &[usize] {
        &self.in_sources[self.in_offsets[j]..self.in_offsets[j + 1]]
    }

    pub fn in_degree(&self, j: usize) -> usize {
        self.in_offsets[j + 1] - self.in_offsets[j]
    }

    /// Column L1 norms, `in_degree / k`.
    pub fn col_l1(&self) -> &[f64] {
        &self.col_l1
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.n).any(|i| self.neighbours(i).contains(&i))
    }

    /// `out = W x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let w = self.weight();
        for (i, o) in out.iter_mut().enumerate() {
            let s: f64 = self.neighbours(i).iter().map(|&j| x[j]).sum();
            *o = s * w;
        }
    }

    /// Dense copy, row-major. Intended for tests and debugging on small `n`.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        let w = self.weight();
        for i in 0..self.n {
            for &j in self.neighbours(i) {
                out[i * self.n + j] = w;
            }
        }
        out
    }

    /// Writes `row,col,weight` triplets (zero-based), row-major.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "row,col,weight")?;
        let w = self.weight();
        for i in 0..self.n {
            for &j in self.neighbours(i) {
                writeln!(out, "{i},{j},{w:?}")?;
            }
        }
        Ok(())
    }
}

/// Builds the kNN transition matrix of `data`.
pub fn build_knn_graph(data: &DataMatrix, k: usize, metric: DistanceMetric) -> Result<TransitionMatrix> {
    KnnTable::compute(data, k, metric)?.transition_matrix(k)
}
