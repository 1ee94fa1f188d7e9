#![allow(dead_code)]

use cns_core::chain::{build_initial_assignment, final_solution, solve_resolvent_column};
use cns_core::{ResolventColumn, SoftAssignment, TransitionMatrix};
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;

/// Random out-degree-`k` graph without self-loops.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, k: usize) -> TransitionMatrix {
    let lists = (0..n)
        .map(|i| {
            sample(rng, n - 1, k)
                .into_iter()
                .map(|j| if j >= i { j + 1 } else { j })
                .collect()
        })
        .collect();
    TransitionMatrix::from_neighbour_lists(n, k, lists).unwrap()
}

/// `I - (1 - λ) W` as a dense matrix.
pub fn dense_m(w: &TransitionMatrix, lambda: f64) -> DMatrix<f64> {
    let n = w.n();
    let dense = w.to_dense();
    DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - (1.0 - lambda) * dense[i * n + j]
    })
}

/// `λ M⁻¹ F0` via a dense LU factorisation.
pub fn dense_limit(w: &TransitionMatrix, lambda: f64, f0: &SoftAssignment) -> DMatrix<f64> {
    let lu = dense_m(w, lambda).lu();
    let (n, k) = (f0.n(), f0.k());
    let rhs = DMatrix::from_fn(n, k, |i, c| f0.values()[[i, c]]);
    lu.solve(&rhs).unwrap() * lambda
}

pub fn dense_solve(w: &TransitionMatrix, lambda: f64, rhs: &[f64]) -> Vec<f64> {
    let lu = dense_m(w, lambda).lu();
    lu.solve(&DVector::from_column_slice(rhs)).unwrap().as_slice().to_vec()
}

/// Closed-form limit for the given informative points.
pub fn closed_form(w: &TransitionMatrix, lambda: f64, selected: &[usize], tol: f64) -> SoftAssignment {
    let cols: Vec<ResolventColumn> = selected
        .iter()
        .map(|&j| solve_resolvent_column(w, lambda, j, tol).unwrap())
        .collect();
    let refs: Vec<&ResolventColumn> = cols.iter().collect();
    final_solution(lambda, selected, &refs).unwrap()
}

pub fn initial(n: usize, selected: &[usize]) -> SoftAssignment {
    build_initial_assignment(n, selected).unwrap()
}

pub fn max_abs_diff(a: &SoftAssignment, b: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.n() {
        for c in 0..a.k() {
            worst = worst.max((a.values()[[i, c]] - b[(i, c)]).abs());
        }
    }
    worst
}

pub fn max_abs_diff_soft(a: &SoftAssignment, b: &SoftAssignment) -> f64 {
    a.values()
        .iter()
        .zip(b.values().iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest matched mass over every injective map from the smaller side of
/// a `g × c` table to the larger.
pub fn brute_force_matching(counts: &[u64], g: usize, c: usize) -> u64 {
    fn go(counts: &[u64], g: usize, c: usize, row: usize, used: &mut Vec<bool>, transpose: bool) -> u64 {
        let (rows, cols) = if transpose { (c, g) } else { (g, c) };
        if row == rows {
            return 0;
        }
        let mut best = 0;
        for col in 0..cols {
            if used[col] {
                continue;
            }
            used[col] = true;
            let cell = if transpose { counts[col * c + row] } else { counts[row * c + col] };
            best = best.max(cell + go(counts, g, c, row + 1, used, transpose));
            used[col] = false;
        }
        best
    }
    let transpose = g > c;
    let cols = if transpose { g } else { c };
    go(counts, g, c, 0, &mut vec![false; cols], transpose)
}

/// Adjusted Rand index by counting agreeing pairs directly.
pub fn pair_ari(truth: &[usize], pred: &[usize]) -> f64 {
    let n = truth.len();
    let (mut both, mut same_t, mut same_p) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let t = truth[i] == truth[j];
            let p = pred[i] == pred[j];
            same_t += t as u8 as f64;
            same_p += p as u8 as f64;
            both += (t && p) as u8 as f64;
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let expected = same_t * same_p / pairs;
    let max = 0.5 * (same_t + same_p);
    if max - expected == 0.0 {
        0.0
    } else {
        (both - expected) / (max - expected)
    }
}

/// Peak resident set size of this process in kilobytes, where available.
pub fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with("VmHWM:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}
