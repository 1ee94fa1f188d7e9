//! External validity metrics: optimal-matching accuracy, Adjusted Rand Index
//! and Adjusted Mutual Information.

use serde::{Deserialize, Serialize};

use crate::data::LabelVector;
use crate::error::{CnsError, Result};

/// Counts of `(truth, predicted)` label pairs over the labels that occur.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `groups × clusters`, row-major.
    counts: Vec<u64>,
    groups: usize,
    clusters: usize,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    total: u64,
}

/// Maps each occurring label to its rank among the occurring labels.
fn dense_codes(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    let codes = labels
        .iter()
        .map(|l| present.binary_search(l).expect("label is present"))
        .collect();
    (codes, present.len())
}

impl ContingencyTable {
    pub fn from_counts(groups: usize, clusters: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != groups * clusters {
            return Err(CnsError::InvalidData(format!(
                "{} counts for a {groups}x{clusters} table",
                counts.len()
            )));
        }
        let row_sums: Vec<u64> = (0..groups)
            .map(|g| counts[g * clusters..(g + 1) * clusters].iter().sum())
            .collect();
        let col_sums: Vec<u64> = (0..clusters)
            .map(|c| (0..groups).map(|g| counts[g * clusters + c]).sum())
            .collect();
        let total = row_sums.iter().sum();
        Ok(ContingencyTable {
            counts,
            groups,
            clusters,
            row_sums,
            col_sums,
            total,
        })
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn count(&self, g: usize, c: usize) -> u64 {
        self.counts[g * self.clusters + c]
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn transpose(&self) -> Self {
        let counts = (0..self.clusters)
            .flat_map(|c| (0..self.groups).map(move |g| (g, c)))
            .map(|(g, c)| self.count(g, c))
            .collect();
        Self::from_counts(self.clusters, self.groups, counts).expect("shape preserved")
    }
}

pub fn contingency(truth: &LabelVector, pred: &LabelVector) -> Result<ContingencyTable> {
    if truth.len() != pred.len() {
        return Err(CnsError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    let (t, groups) = dense_codes(truth.labels());
    let (p, clusters) = dense_codes(pred.labels());
    let mut counts = vec![0u64; groups * clusters];
    for (&g, &c) in t.iter().zip(&p) {
        counts[g * clusters + c] += 1;
    }
    ContingencyTable::from_counts(groups, clusters, counts)
}

/// Maximum-weight perfect matching on a square matrix (Hungarian algorithm,
/// `O(n³)`). Returns `assignment[row] = column`.
fn max_weight_matching(weights: &[Vec<i64>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let top = weights.iter().flatten().copied().max().unwrap_or(0);
    let cost = |i: usize, j: usize| top - weights[i][j];

    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Fraction of points whose cluster maps to their group under the best
/// one-to-one matching of clusters to groups. Unmatched clusters count as
/// errors.
pub fn accuracy(table: &ContingencyTable) -> f64 {
    if table.total == 0 {
        return 0.0;
    }
    let size = table.groups.max(table.clusters);
    let weights: Vec<Vec<i64>> = (0..size)
        .map(|g| {
            (0..size)
                .map(|c| {
                    if g < table.groups && c < table.clusters {
                        table.count(g, c) as i64
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    let matched: i64 = max_weight_matching(&weights)
        .iter()
        .enumerate()
        .map(|(g, &c)| weights[g][c])
        .sum();
    matched as f64 / table.total as f64
}

fn comb2(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand Index; 0 when both partitions are trivial.
pub fn ari(table: &ContingencyTable) -> f64 {
    let total = comb2(table.total);
    if total == 0.0 {
        return 0.0;
    }
    let pairs: f64 = table.counts.iter().map(|&c| comb2(c)).sum();
    let rows: f64 = table.row_sums.iter().map(|&c| comb2(c)).sum();
    let cols: f64 = table.col_sums.iter().map(|&c| comb2(c)).sum();
    let expected = rows * cols / total;
    let max_index = 0.5 * (rows + cols);
    let denom = max_index - expected;
    if denom == 0.0 {
        return 0.0;
    }
    (pairs - expected) / denom
}

fn entropy(sums: &[u64], total: u64) -> f64 {
    let n = total as f64;
    sums.iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn mutual_information(table: &ContingencyTable) -> f64 {
    let n = table.total as f64;
    let mut mi = 0.0;
    for g in 0..table.groups {
        for c in 0..table.clusters {
            let nij = table.count(g, c);
            if nij == 0 {
                continue;
            }
            let nij = nij as f64;
            let a = table.row_sums[g] as f64;
            let b = table.col_sums[c] as f64;
            mi += nij / n * (n * nij / (a * b)).ln();
        }
    }
    mi
}

/// Expected mutual information under the hypergeometric model of random
/// labellings with the table's marginals.
pub fn expected_mutual_information(table: &ContingencyTable) -> f64 {
    let n = table.total as usize;
    if n == 0 {
        return 0.0;
    }
    let mut ln_fact = vec![0.0f64; n + 1];
    for i in 1..=n {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in &table.row_sums {
        for &b in &table.col_sums {
            let (a, b) = (a as usize, b as usize);
            if a == 0 || b == 0 {
                continue;
            }
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = ln_fact[a] + ln_fact[b] + ln_fact[n - a] + ln_fact[n - b] - ln_fact[n];
            for nij in lo..=hi {
                let x = nij as f64;
                let term = x / nf * (nf * x / (a as f64 * b as f64)).ln();
                let log_p = fixed
                    - ln_fact[nij]
                    - ln_fact[a - nij]
                    - ln_fact[b - nij]
                    - ln_fact[n + nij - a - b];
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

/// True when each occurring label on either side meets exactly one label on
/// the other side, i.e. the partitions agree up to renaming.
fn identical_partitions(table: &ContingencyTable) -> bool {
    let rows_ok = (0..table.groups).all(|g| (0..table.clusters).filter(|&c| table.count(g, c) > 0).count() <= 1);
    let cols_ok = (0..table.clusters).all(|c| (0..table.groups).filter(|&g| table.count(g, c) > 0).count() <= 1);
    rows_ok && cols_ok
}

/// Adjusted Mutual Information, normalised by `max(H(truth), H(pred))`.
pub fn ami(table: &ContingencyTable) -> f64 {
    if table.total == 0 {
        return 0.0;
    }
    if identical_partitions(table) {
        return 1.0;
    }
    let mi = mutual_information(table);
    let emi = expected_mutual_information(table);
    let h_true = entropy(&table.row_sums, table.total);
    let h_pred = entropy(&table.col_sums, table.total);
    let numer = mi - emi;
    let mut denom = h_true.max(h_pred) - emi;
    if denom.abs() <= 1e-12 && numer.abs() <= 1e-12 {
        return 0.0;
    }
    // Keep the sign of a tiny denominator but bound its magnitude.
    if denom < 0.0 {
        denom = denom.min(-f64::EPSILON);
    } else {
        denom = denom.max(f64::EPSILON);
    }
    numer / denom
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub ari: f64,
    pub ami: f64,
}

impl MetricReport {
    pub fn from_table(table: &ContingencyTable) -> Self {
        MetricReport {
            accuracy: accuracy(table),
            ari: ari(table),
            ami: ami(table),
        }
    }
}

pub fn evaluate(truth: &LabelVector, pred: &LabelVector) -> Result<MetricReport> {
    Ok(MetricReport::from_table(&contingency(truth, pred)?))
}
