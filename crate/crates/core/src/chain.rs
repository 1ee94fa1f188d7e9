//! The absorbing-chain closed form.
//!
//! Smoothing `F <- (1 - λ) W F + λ F0` converges to `λ M⁻¹ F0` with
//! `M = I - (1 - λ) W`. When `F0` is uniform except for `K` indicator rows
//! the limit only needs the `K` columns of `M⁻¹` belonging to those rows,
//! which is what [`final_solution`] consumes.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use ndarray::Array2;
use rayon::prelude::*;

use crate::data::LabelVector;
use crate::error::{CnsError, Result};
use crate::graph::TransitionMatrix;

/// Default residual tolerance for resolvent solves.
pub const DEFAULT_TOL: f64 = 1e-10;

const CLAMP_WINDOW: f64 = 1e-12;
const ROW_SUM_TOL: f64 = 1e-9;

/// Extra iterations allowed beyond the analytic contraction bound.
const ITERATION_MARGIN: usize = 64;

/// An `n × K` matrix whose rows are cluster-membership distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    values: Array2<f64>,
}

impl SoftAssignment {
    /// Validates `values`, zeroing entries in `[-1e-12, 0)`.
    pub fn new(mut values: Array2<f64>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(CnsError::InvalidData("soft assignment needs at least one column".into()));
        }
        for (i, mut row) in values.rows_mut().into_iter().enumerate() {
            for v in row.iter_mut() {
                if !v.is_finite() || *v < -CLAMP_WINDOW {
                    return Err(CnsError::NegativeMass { row: i, value: *v });
                }
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(CnsError::RowSum { row: i, sum });
            }
        }
        Ok(SoftAssignment { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of clusters (columns).
    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Mean over rows of the largest membership probability.
    pub fn mean_row_max(&self) -> f64 {
        let total: f64 = self
            .values
            .rows()
            .into_iter()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .sum();
        total / self.n() as f64
    }
}

/// Column `index` of `(I - (1 - λ) W)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventColumn {
    pub index: usize,
    pub lambda: f64,
    pub values: Vec<f64>,
    pub iterations: usize,
    /// `‖M x - e_index‖∞` at termination.
    pub residual: f64,
}

impl ResolventColumn {
    /// L1 norm; entries are non-negative so this is the plain sum.
    pub fn l1(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(CnsError::LambdaOutOfRange(lambda));
    }
    Ok(())
}

fn iteration_budget(lambda: f64, tol: f64, scale: f64) -> usize {
    let ratio = (tol * lambda / scale.max(f64::MIN_POSITIVE)).min(0.5);
    (ratio.ln() / (1.0 - lambda).ln()).ceil() as usize + ITERATION_MARGIN
}

/// Solves `(I - (1 - λ) W) x = rhs` by the fixed-point iteration
/// `x <- (1 - λ) W x + rhs`, which contracts at rate `1 - λ` in the ∞-norm.
///
/// Returns `x` with `‖M x - rhs‖∞ <= tol`, the iteration count and the
/// achieved residual.
pub fn solve_resolvent(
    w: &TransitionMatrix,
    lambda: f64,
    rhs: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, usize, f64)> {
    check_lambda(lambda)?;
    let n = w.n();
    if rhs.len() != n {
        return Err(CnsError::InvalidData(format!("rhs has length {}, expected {n}", rhs.len())));
    }
    let damp = 1.0 - lambda;
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let budget = iteration_budget(lambda, tol, scale);
    let mut x = rhs.to_vec();
    let mut wx = vec![0.0; n];
    for it in 1..=budget {
        w.apply(&x, &mut wx);
        // Residual of the current iterate is x - (1 - λ) W x - rhs.
        let mut residual = 0.0f64;
        for i in 0..n {
            let next = damp * wx[i] + rhs[i];
            residual = residual.max((x[i] - next).abs());
            x[i] = next;
        }
        if damp * residual <= tol {
            let achieved = residual_of(w, lambda, &x, rhs, &mut wx);
            if achieved <= tol {
                return Ok((x, it, achieved));
            }
        }
    }
    let achieved = residual_of(w, lambda, &x, rhs, &mut wx);
    Err(CnsError::NoConvergence {
        column: usize::MAX,
        iterations: budget,
        residual: achieved,
        tol,
    })
}

fn residual_of(w: &TransitionMatrix, lambda: f64, x: &[f64], rhs: &[f64], scratch: &mut [f64]) -> f64 {
    w.apply(x, scratch);
    x.iter()
        .zip(scratch.iter())
        .zip(rhs)
        .map(|((xi, wi), bi)| (xi - (1.0 - lambda) * wi - bi).abs())
        .fold(0.0, f64::max)
}

/// Column `j` of the resolvent for a single `λ`.
pub fn solve_resolvent_column(
    w: &TransitionMatrix,
    lambda: f64,
    j: usize,
    tol: f64,
) -> Result<ResolventColumn> {
    Ok(solve_resolvent_columns(w, &[lambda], j, tol)?.remove(0))
}

/// Column `j` of the resolvent for several `λ` at once.
///
/// The fixed-point iteration started from zero produces the partial sums of
/// `Σ_t (1 - λ)^t W^t e_j`, and the residual after `T` terms is exactly
/// `(1 - λ)^T ‖W^T e_j‖∞`. The powers `W^t e_j` do not depend on `λ`, so
/// one pass serves every value. The iterate is propagated only over rows
/// that can reach `j` until that set covers a quarter of the graph.
pub fn solve_resolvent_columns(
    w: &TransitionMatrix,
    lambdas: &[f64],
    j: usize,
    tol: f64,
) -> Result<Vec<ResolventColumn>> {
    let n = w.n();
    if j >= n {
        return Err(CnsError::IndexOutOfRange { index: j, n });
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(CnsError::InvalidData(format!("tolerance must be positive, got {tol}")));
    }
    for &l in lambdas {
        check_lambda(l)?;
    }
    let m = lambdas.len();
    let weight = w.weight();
    let budgets: Vec<usize> = lambdas.iter().map(|&l| iteration_budget(l, tol, 1.0)).collect();

    let mut xs = vec![vec![0.0f64; n]; m];
    let mut pow = vec![1.0f64; m];
    let mut done: Vec<Option<(usize, f64)>> = vec![None; m];

    let mut cur = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    let mut in_next = vec![false; n];
    let mut support = vec![j];
    let mut next_support: Vec<usize> = Vec::new();
    let mut dense = false;
    cur[j] = 1.0;

    let mut t = 0usize;
    loop {
        for l in 0..m {
            if done[l].is_some() {
                continue;
            }
            let (x, p) = (&mut xs[l], pow[l]);
            if dense {
                for (xi, ci) in x.iter_mut().zip(&cur) {
                    *xi += p * ci;
                }
            } else {
                for &i in &support {
                    x[i] += p * cur[i];
                }
            }
        }

        if dense {
            w.apply(&cur, &mut next);
        } else {
            next_support.clear();
            for &src in &support {
                let v = cur[src] * weight;
                for &i in w.in_neighbours(src) {
                    if !in_next[i] {
                        in_next[i] = true;
                        next_support.push(i);
                    }
                    next[i] += v;
                }
            }
            for &i in &next_support {
                in_next[i] = false;
            }
            if next_support.len() * 4 > n {
                dense = true;
            }
        }
        let norm = if dense {
            next.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
        } else {
            next_support.iter().fold(0.0f64, |a, &i| a.max(next[i].abs()))
        };

        t += 1;
        let mut all_done = true;
        for l in 0..m {
            if done[l].is_some() {
                continue;
            }
            pow[l] *= 1.0 - lambdas[l];
            let residual = pow[l] * norm;
            if residual <= tol {
                done[l] = Some((t, residual));
            } else if t >= budgets[l] || !residual.is_finite() {
                return Err(CnsError::NoConvergence {
                    column: j,
                    iterations: t,
                    residual,
                    tol,
                });
            } else {
                all_done = false;
            }
        }
        if all_done {
            break;
        }

        std::mem::swap(&mut cur, &mut next);
        if !dense {
            // `next` now holds the previous iterate on the old support.
            for &i in &support {
                next[i] = 0.0;
            }
            std::mem::swap(&mut support, &mut next_support);
        }
    }

    Ok(xs
        .into_iter()
        .zip(lambdas)
        .zip(done)
        .map(|((values, &lambda), d)| {
            let (iterations, residual) = d.expect("loop exits only when every lambda converged");
            ResolventColumn {
                index: j,
                lambda,
                values,
                iterations,
                residual,
            }
        })
        .collect())
}

/// Thread-safe cache of resolvent columns for one transition matrix, keyed
/// by `(λ, j)`.
pub struct ResolventCache<'a> {
    w: &'a TransitionMatrix,
    tol: f64,
    columns: RwLock<HashMap<(u64, usize), Arc<ResolventColumn>>>,
}

impl<'a> ResolventCache<'a> {
    pub fn new(w: &'a TransitionMatrix, tol: f64) -> Self {
        ResolventCache {
            w,
            tol,
            columns: RwLock::new(HashMap::new()),
        }
    }

    pub fn graph(&self) -> &TransitionMatrix {
        self.w
    }

    pub fn len(&self) -> usize {
        self.columns.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, lambda: f64, j: usize) -> Result<Arc<ResolventColumn>> {
        Ok(self.columns_for(&[lambda], &[j])?.remove(0).remove(0))
    }

    /// Columns for every `(λ, j)` pair, indexed `[λ][j]`. Missing indices
    /// are solved in parallel, one multi-`λ` pass per index.
    pub fn columns_for(&self, lambdas: &[f64], indices: &[usize]) -> Result<Vec<Vec<Arc<ResolventColumn>>>> {
        let missing: Vec<usize> = {
            let map = self.columns.read().expect("cache lock poisoned");
            indices
                .iter()
                .copied()
                .filter(|&j| lambdas.iter().any(|l| !map.contains_key(&(l.to_bits(), j))))
                .collect()
        };
        let solved: Vec<Vec<ResolventColumn>> = missing
            .par_iter()
            .map(|&j| solve_resolvent_columns(self.w, lambdas, j, self.tol))
            .collect::<Result<_>>()?;
        {
            let mut map = self.columns.write().expect("cache lock poisoned");
            for cols in solved {
                for col in cols {
                    map.entry((col.lambda.to_bits(), col.index)).or_insert_with(|| Arc::new(col));
                }
            }
        }
        let map = self.columns.read().expect("cache lock poisoned");
        Ok(lambdas
            .iter()
            .map(|l| {
                indices
                    .iter()
                    .map(|&j| Arc::clone(&map[&(l.to_bits(), j)]))
                    .collect()
            })
            .collect())
    }
}

fn check_selected(n: usize, selected: &[usize]) -> Result<()> {
    if selected.is_empty() {
        return Err(CnsError::InvalidData("need at least one informative index".into()));
    }
    let mut seen = vec![false; n];
    for &i in selected {
        if i >= n {
            return Err(CnsError::IndexOutOfRange { index: i, n });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(CnsError::DuplicateIndex(i));
        }
    }
    Ok(())
}

/// Initial assignment: row `selected[c]` is the indicator of cluster `c`,
/// every other row is uniform.
pub fn build_initial_assignment(n: usize, selected: &[usize]) -> Result<SoftAssignment> {
    check_selected(n, selected)?;
    let k = selected.len();
    let mut values = Array2::from_elem((n, k), 1.0 / k as f64);
    for (c, &i) in selected.iter().enumerate() {
        values.row_mut(i).fill(0.0);
        values[[i, c]] = 1.0;
    }
    SoftAssignment::new(values)
}

/// The limit `λ M⁻¹ F0` for the initial assignment defined by `selected`,
/// computed from the matching resolvent columns only:
///
/// `F = (1/K) 1 1ᵀ + λ [M⁻¹_{:c}] - (λ/K) (Σ_c M⁻¹_{:c}) 1ᵀ`.
pub fn final_solution(
    lambda: f64,
    selected: &[usize],
    columns: &[&ResolventColumn],
) -> Result<SoftAssignment> {
    check_lambda(lambda)?;
    if columns.len() != selected.len() {
        return Err(CnsError::InvalidData(format!(
            "{} columns for {} informative indices",
            columns.len(),
            selected.len()
        )));
    }
    let n = columns.first().map_or(0, |c| c.values.len());
    check_selected(n, selected)?;
    for (col, &i) in columns.iter().zip(selected) {
        if col.index != i || col.lambda != lambda || col.values.len() != n {
            return Err(CnsError::InvalidData(format!(
                "column for index {} (lambda {}) does not match informative index {i} (lambda {lambda})",
                col.index, col.lambda
            )));
        }
    }
    let k = selected.len();
    if k == 1 {
        return SoftAssignment::new(Array2::ones((n, 1)));
    }
    let kf = k as f64;
    let mut values = Array2::zeros((n, k));
    for i in 0..n {
        let total: f64 = columns.iter().map(|c| c.values[i]).sum();
        let shift = 1.0 / kf - lambda / kf * total;
        for (c, col) in columns.iter().enumerate() {
            values[[i, c]] = shift + lambda * col.values[i];
        }
    }
    SoftAssignment::new(values)
}

/// Runs `F <- (1 - λ) W F + λ F0` from `F0` until the largest entry change
/// is at most `tol` or `t_max` steps have been taken. Returns the last
/// iterate and the number of steps.
///
/// This is the slow route to the same limit as [`final_solution`] and is
/// kept for cross-checking.
pub fn iterate_smoothing(
    w: &TransitionMatrix,
    lambda: f64,
    f0: &SoftAssignment,
    t_max: usize,
    tol: f64,
) -> Result<(SoftAssignment, usize)> {
    check_lambda(lambda)?;
    let (n, k) = (f0.n(), f0.k());
    if n != w.n() {
        return Err(CnsError::InvalidData(format!("F0 has {n} rows, graph has {}", w.n())));
    }
    let f0v = f0.values();
    let mut f = f0v.clone();
    let mut next = Array2::zeros((n, k));
    let weight = w.weight();
    let mut steps = 0;
    while steps < t_max {
        let mut change = 0.0f64;
        for i in 0..n {
            for c in 0..k {
                let s: f64 = w.neighbours(i).iter().map(|&j| f[[j, c]]).sum();
                let v = (1.0 - lambda) * s * weight + lambda * f0v[[i, c]];
                change = change.max((v - f[[i, c]]).abs());
                next[[i, c]] = v;
            }
        }
        std::mem::swap(&mut f, &mut next);
        steps += 1;
        if change <= tol {
            break;
        }
    }
    Ok((SoftAssignment::new(f)?, steps))
}

/// Hard labels from a soft assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardLabels {
    /// Row argmax, lowest column on ties. Not renumbered, so `groups()` is
    /// the configured `K` even if some clusters end up empty.
    pub labels: LabelVector,
    /// Number of distinct labels actually used.
    pub effective_clusters: usize,
}

pub fn hard_labels(f: &SoftAssignment) -> HardLabels {
    let k = f.k();
    let labels: Vec<usize> = f
        .values()
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for c in 1..k {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    let mut used = vec![false; k];
    for &l in &labels {
        used[l] = true;
    }
    let effective_clusters = used.iter().filter(|&&u| u).count();
    HardLabels {
        labels: LabelVector::with_groups(labels, k).expect("argmax is always below K"),
        effective_clusters,
    }
}
