//! Choosing the informative points and the tuning parameters.
//!
//! Candidates are the local maxima of the column norms of `W`. Their
//! resolvent columns give a magnitude `s_j` and pairwise overlaps `c_{j,l}`,
//! from which `K` points are picked greedily. Every `(k, λ, K)` cell is
//! scored by the clarity gain `C` divided by the best gain `R` attainable in
//! an idealised, perfectly clusterable graph; the highest `C / R` wins.

use std::cmp::Ordering;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chain::{self, hard_labels, ResolventCache, ResolventColumn, SoftAssignment};
use crate::data::{DataMatrix, LabelVector};
use crate::error::{CnsError, Result};
use crate::graph::{DistanceMetric, KnnTable, Points, TransitionMatrix};

/// Default cap on the candidate set size.
pub const DEFAULT_CAP: usize = 300;
/// Default largest `K` tried by the grid search.
pub const DEFAULT_K_MAX: usize = 30;

/// Points eligible to seed a cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    /// Point indices, ascending.
    pub indices: Vec<usize>,
    /// `‖W_{:i}‖₁ · min_{j≠i} d(x_i, x_j)` over the other candidates,
    /// aligned with `indices`. Infinite when there is a single candidate.
    pub scores: Vec<f64>,
    /// Set when more than `cap` local maxima were found and the set was cut.
    pub capped: bool,
    /// Number of local maxima before capping.
    pub uncapped_len: usize,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Cap scores for a set of points, brute force over pairs.
fn cap_scores(w: &TransitionMatrix, points: &Points<'_>, indices: &[usize]) -> Vec<f64> {
    indices
        .iter()
        .map(|&i| {
            let nearest = indices
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| points.distance(i, j))
                .fold(f64::INFINITY, f64::min);
            w.col_l1()[i] * nearest
        })
        .collect()
}

/// Local maxima of the column norms of `w` over each point's own
/// neighbourhood, cut to the `cap` highest cap scores (ties to the lower
/// index) when there are more than `cap`.
pub fn candidate_set(
    w: &TransitionMatrix,
    data: &DataMatrix,
    metric: DistanceMetric,
    cap: usize,
) -> Result<CandidateSet> {
    if data.n() != w.n() {
        return Err(CnsError::InvalidData(format!(
            "graph has {} rows but data has {}",
            w.n(),
            data.n()
        )));
    }
    if cap == 0 {
        return Err(CnsError::InvalidData("candidate cap must be positive".into()));
    }
    // In-degrees are integers, so compare those rather than the norms.
    let maxima: Vec<usize> = (0..w.n())
        .filter(|&i| {
            let own = w.in_degree(i);
            w.neighbours(i).iter().all(|&j| w.in_degree(j) <= own)
        })
        .collect();
    assert!(!maxima.is_empty(), "the largest column norm is always a local maximum");

    let points = Points::new(data, metric)?;
    let uncapped_len = maxima.len();
    let scores = cap_scores(w, &points, &maxima);
    if maxima.len() <= cap {
        return Ok(CandidateSet {
            indices: maxima,
            scores,
            capped: false,
            uncapped_len,
        });
    }
    let mut order: Vec<usize> = (0..maxima.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(maxima[a].cmp(&maxima[b])));
    order.truncate(cap);
    order.sort_unstable();
    Ok(CandidateSet {
        indices: order.iter().map(|&p| maxima[p]).collect(),
        scores: order.iter().map(|&p| scores[p]).collect(),
        capped: true,
        uncapped_len,
    })
}

/// Column magnitudes `s` and pairwise inner products `c` of the candidate
/// resolvent columns. `c` is row-major with `+∞` on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionScores {
    pub s: Vec<f64>,
    pub c: Vec<f64>,
}

impl SelectionScores {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn c(&self, j: usize, l: usize) -> f64 {
        self.c[j * self.s.len() + l]
    }
}

pub fn selection_scores(columns: &[&ResolventColumn]) -> SelectionScores {
    let m = columns.len();
    let s: Vec<f64> = columns.iter().map(|c| c.l1()).collect();
    // Columns are often supported on a single well-separated group, so dot
    // products only visit the nonzero entries of the sparser side.
    let supports: Vec<Vec<usize>> = columns
        .iter()
        .map(|c| (0..c.values.len()).filter(|&i| c.values[i] != 0.0).collect())
        .collect();
    let mut c = vec![f64::INFINITY; m * m];
    for a in 0..m {
        for b in a + 1..m {
            let (sa, sb) = (&supports[a], &supports[b]);
            let dot = if sa.len() == columns[a].values.len() && sb.len() == columns[b].values.len() {
                columns[a].values.iter().zip(&columns[b].values).map(|(x, y)| x * y).sum()
            } else {
                let (idx, other, own) = if sa.len() <= sb.len() {
                    (sa, &columns[b].values, &columns[a].values)
                } else {
                    (sb, &columns[a].values, &columns[b].values)
                };
                idx.iter().map(|&i| own[i] * other[i]).sum::<f64>()
            };
            c[a * m + b] = dot;
            c[b * m + a] = dot;
        }
    }
    SelectionScores { s, c }
}

/// Greedy choice of `k_clusters` candidates: first the largest `s_j`, then
/// repeatedly the candidate minimising `max_{l chosen} c_{j,l} / s_j²`.
/// Ties go to the earlier candidate. Returns positions into the candidate
/// list, in selection order.
pub fn select_informative_positions(scores: &SelectionScores, k_clusters: usize) -> Result<Vec<usize>> {
    let m = scores.len();
    if k_clusters > m || k_clusters == 0 {
        return Err(CnsError::TooFewCandidates {
            requested: k_clusters,
            available: m,
        });
    }
    let mut first = 0;
    for j in 1..m {
        if scores.s[j] > scores.s[first] {
            first = j;
        }
    }
    let mut chosen = vec![first];
    let mut worst = vec![f64::NEG_INFINITY; m];
    while chosen.len() < k_clusters {
        let last = *chosen.last().unwrap();
        for (j, wj) in worst.iter_mut().enumerate() {
            *wj = wj.max(scores.c(j, last));
        }
        let mut best: Option<(usize, f64)> = None;
        for (j, (&wj, &sj)) in worst.iter().zip(&scores.s).enumerate() {
            let v = wj / (sj * sj);
            if v == f64::INFINITY {
                continue;
            }
            if best.is_none_or(|(_, bv)| v < bv) {
                best = Some((j, v));
            }
        }
        let (j, _) = best.expect("fewer chosen than candidates leaves a finite option");
        chosen.push(j);
    }
    Ok(chosen)
}

/// [`select_informative_positions`] mapped back to point indices.
pub fn select_informative(
    scores: &SelectionScores,
    candidates: &CandidateSet,
    k_clusters: usize,
) -> Result<Vec<usize>> {
    if scores.len() != candidates.len() {
        return Err(CnsError::InvalidData(format!(
            "{} scores for {} candidates",
            scores.len(),
            candidates.len()
        )));
    }
    Ok(select_informative_positions(scores, k_clusters)?
        .into_iter()
        .map(|p| candidates.indices[p])
        .collect())
}

/// Clarity of a final assignment relative to its initial assignment and to
/// the idealised reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub score: f64,
    pub mean_final_max: f64,
    pub initial_reference: f64,
}

/// `(n - K + K²) / (n K)`: mean row maximum of the initial assignment.
pub fn initial_reference(n: usize, k_clusters: usize) -> f64 {
    let (n, kk) = (n as f64, k_clusters as f64);
    (n - kk + kk * kk) / (n * kk)
}

/// `R(λ, k) = (1 - λ)(1/n + 1/k - 2/√(nk))`.
pub fn reference(lambda: f64, k: usize, n: usize) -> f64 {
    let (nf, kf) = (n as f64, k as f64);
    (1.0 - lambda) * (1.0 / nf + 1.0 / kf - 2.0 / (nf * kf).sqrt())
}

pub fn criterion(f_inf: &SoftAssignment, lambda: f64, k: usize, n: usize, k_clusters: usize) -> Result<CriterionReport> {
    if f_inf.n() != n || f_inf.k() != k_clusters {
        return Err(CnsError::InvalidData(format!(
            "assignment is {}x{}, expected {n}x{k_clusters}",
            f_inf.n(),
            f_inf.k()
        )));
    }
    let r = reference(lambda, k, n);
    if k >= n || lambda >= 1.0 || r.is_nan() || r <= 0.0 {
        return Err(CnsError::DegenerateReference(r));
    }
    let mean_final_max = f_inf.mean_row_max();
    let initial_reference = initial_reference(n, k_clusters);
    let c = mean_final_max - initial_reference;
    Ok(CriterionReport {
        c,
        r,
        score: c / r,
        mean_final_max,
        initial_reference,
    })
}

/// Limits reached by an ordinary member and by the informative member of
/// cluster `cluster` in the idealised graph where every member's neighbours
/// are `k - 1` co-members plus the informative point.
pub fn idealized_limits(lambda: f64, k: usize, k_clusters: usize, cluster: usize) -> (Vec<f64>, Vec<f64>) {
    let (kf, kk) = (k as f64, k_clusters as f64);
    let member_base = (kf - 1.0 + lambda) / (kf * kk);
    let info_base = (1.0 - lambda) * (kf - 1.0) / (kf * kk);
    let mut member = vec![member_base; k_clusters];
    let mut informative = vec![info_base; k_clusters];
    member[cluster] += (1.0 - lambda) / kf;
    informative[cluster] += (1.0 + lambda * (kf - 1.0)) / kf;
    (member, informative)
}

/// Clarity gain in the idealised graph:
/// `(1 - λ)(1/n + 1/k - 1/(kK) - K/n)`. Its maximum over `K` is [`reference`].
pub fn idealized_improvement(lambda: f64, k: usize, k_clusters: usize, n: usize) -> f64 {
    let (nf, kf, kk) = (n as f64, k as f64, k_clusters as f64);
    (1.0 - lambda) * (1.0 / nf + 1.0 / kf - 1.0 / (kf * kk) - kk / nf)
}

/// A fully specified model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub lambda: f64,
    pub k: usize,
    #[serde(rename = "K")]
    pub clusters: usize,
    pub metric: DistanceMetric,
    /// Informative point indices, in selection order.
    pub selected: Vec<usize>,
}

/// One scored cell of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub metric: DistanceMetric,
    pub k: usize,
    pub lambda: f64,
    #[serde(rename = "K")]
    pub clusters: usize,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub score: f64,
    pub effective_clusters: usize,
}

/// Output of a fitted model.
#[derive(Debug, Clone)]
pub struct ClusterResult {
    pub labels: LabelVector,
    pub soft: SoftAssignment,
    pub config: ModelConfig,
    pub report: CriterionReport,
    pub effective_clusters: usize,
    pub warnings: Vec<String>,
}

/// Grid search settings. `None` grids are filled with the defaults for the
/// data size.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub k_grid: Option<Vec<usize>>,
    pub lambda_grid: Option<Vec<f64>>,
    pub k_max: usize,
    pub cap: usize,
    pub tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            k_grid: None,
            lambda_grid: None,
            k_max: DEFAULT_K_MAX,
            cap: DEFAULT_CAP,
            tol: chain::DEFAULT_TOL,
        }
    }
}

/// `{1, 2, 3, 4} · ⌊ln n⌋`, clamped to `[1, n - 1]` and deduplicated.
pub fn default_k_grid(n: usize) -> Vec<usize> {
    let base = (n as f64).ln().floor() as usize;
    clamp_k_grid(&(1..=4).map(|m| m * base).collect::<Vec<_>>(), n)
}

/// `{1, …, 5} · n^{-1/2}`, dropping values `>= 1`.
pub fn default_lambda_grid(n: usize) -> Vec<f64> {
    let step = 1.0 / (n as f64).sqrt();
    (1..=5).map(|m| m as f64 * step).filter(|&l| l < 1.0).collect()
}

fn clamp_k_grid(grid: &[usize], n: usize) -> Vec<usize> {
    let mut out: Vec<usize> = grid.iter().map(|&k| k.clamp(1, n - 1)).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Per-`k` bookkeeping recorded by [`grid_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub k: usize,
    pub candidates: usize,
    pub uncapped: usize,
    pub capped: bool,
}

#[derive(Debug, Clone)]
pub struct GridSearchOutput {
    pub best: ModelConfig,
    pub result: ClusterResult,
    /// Every scored cell, ordered by `(k, λ, K)`.
    pub table: Vec<CriterionRow>,
    pub k_grid: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub candidates: Vec<CandidateSummary>,
    pub warnings: Vec<String>,
    /// Seconds spent on neighbour search and on everything after it.
    pub knn_seconds: f64,
    pub search_seconds: f64,
}

/// Is `a` preferred over `b`? Higher score first, then smaller `K`, larger
/// `k`, larger `λ`.
fn preferred(a: &CriterionRow, b: &CriterionRow) -> bool {
    match a.score.total_cmp(&b.score) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => (b.clusters, a.k, a.lambda.to_bits()) > (a.clusters, b.k, b.lambda.to_bits()),
    }
}

/// Fits every `(k, λ, K)` cell and keeps the one with the largest `C / R`.
pub fn grid_search(data: &DataMatrix, metric: DistanceMetric, spec: &GridSpec) -> Result<GridSearchOutput> {
    let n = data.n();
    let k_grid = match &spec.k_grid {
        Some(g) => clamp_k_grid(g, n),
        None => default_k_grid(n),
    };
    if k_grid.is_empty() {
        return Err(CnsError::EmptyKGrid);
    }
    let lambda_grid = match &spec.lambda_grid {
        Some(g) => {
            for &l in g {
                if !(l > 0.0 && l < 1.0) {
                    return Err(CnsError::LambdaOutOfRange(l));
                }
            }
            let mut g = g.clone();
            g.sort_by(f64::total_cmp);
            g.dedup();
            g
        }
        None => default_lambda_grid(n),
    };
    if lambda_grid.is_empty() {
        return Err(CnsError::EmptyLambdaGrid);
    }
    if spec.k_max < 2 {
        return Err(CnsError::EmptyKRange);
    }

    let started = Instant::now();
    let k_top = *k_grid.last().unwrap();
    let knn = KnnTable::compute(data, k_top, metric)?;
    let knn_seconds = started.elapsed().as_secs_f64();
    let started = Instant::now();

    let mut table = Vec::new();
    let mut candidates_summary = Vec::new();
    let mut warnings = Vec::new();
    let mut best: Option<(CriterionRow, ModelConfig, SoftAssignment, CriterionReport)> = None;

    for &k in &k_grid {
        let w = knn.transition_matrix(k)?;
        let candidates = candidate_set(&w, data, metric, spec.cap)?;
        candidates_summary.push(CandidateSummary {
            k,
            candidates: candidates.len(),
            uncapped: candidates.uncapped_len,
            capped: candidates.capped,
        });
        let top_k = spec.k_max.min(candidates.len());
        if top_k < 2 {
            warnings.push(format!("k = {k}: only {} candidate(s); skipped", candidates.len()));
            continue;
        }
        log::debug!("k = {k}: {} candidates (capped: {})", candidates.len(), candidates.capped);

        let cache = ResolventCache::new(&w, spec.tol);
        let columns = cache.columns_for(&lambda_grid, &candidates.indices)?;
        for (&lambda, cols) in lambda_grid.iter().zip(&columns) {
            let cols: Vec<&ResolventColumn> = cols.iter().map(|c| c.as_ref()).collect();
            let scores = selection_scores(&cols);
            for k_clusters in 2..=top_k {
                let positions = select_informative_positions(&scores, k_clusters)?;
                let selected: Vec<usize> = positions.iter().map(|&p| candidates.indices[p]).collect();
                let chosen: Vec<&ResolventColumn> = positions.iter().map(|&p| cols[p]).collect();
                let f = chain::final_solution(lambda, &selected, &chosen)?;
                let report = criterion(&f, lambda, k, n, k_clusters)?;
                let effective = hard_labels(&f).effective_clusters;
                let row = CriterionRow {
                    metric,
                    k,
                    lambda,
                    clusters: k_clusters,
                    c: report.c,
                    r: report.r,
                    score: report.score,
                    effective_clusters: effective,
                };
                if best.as_ref().is_none_or(|(b, ..)| preferred(&row, b)) {
                    let config = ModelConfig {
                        lambda,
                        k,
                        clusters: k_clusters,
                        metric,
                        selected,
                    };
                    best = Some((row.clone(), config, f, report));
                }
                table.push(row);
            }
        }
    }

    let (_, config, soft, report) = best.ok_or(CnsError::EmptyKRange)?;
    let hard = hard_labels(&soft);
    let result = ClusterResult {
        labels: hard.labels,
        soft,
        config: config.clone(),
        report,
        effective_clusters: hard.effective_clusters,
        warnings: warnings.clone(),
    };
    Ok(GridSearchOutput {
        best: config,
        result,
        table,
        k_grid,
        lambda_grid,
        candidates: candidates_summary,
        warnings,
        knn_seconds,
        search_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Fits a single configuration: candidates, informative points and the
/// final assignment for fixed `(k, λ, K)`.
pub fn fit_config(
    data: &DataMatrix,
    metric: DistanceMetric,
    k: usize,
    lambda: f64,
    k_clusters: usize,
    cap: usize,
    tol: f64,
) -> Result<ClusterResult> {
    let w = crate::graph::build_knn_graph(data, k, metric)?;
    let candidates = candidate_set(&w, data, metric, cap)?;
    let cache = ResolventCache::new(&w, tol);
    let columns = cache.columns_for(&[lambda], &candidates.indices)?.remove(0);
    let cols: Vec<&ResolventColumn> = columns.iter().map(|c| c.as_ref()).collect();
    let scores = selection_scores(&cols);
    let positions = select_informative_positions(&scores, k_clusters)?;
    let selected: Vec<usize> = positions.iter().map(|&p| candidates.indices[p]).collect();
    let chosen: Vec<&ResolventColumn> = positions.iter().map(|&p| cols[p]).collect();
    let soft = chain::final_solution(lambda, &selected, &chosen)?;
    let report = criterion(&soft, lambda, k, data.n(), k_clusters)?;
    let hard = hard_labels(&soft);
    Ok(ClusterResult {
        labels: hard.labels,
        soft,
        config: ModelConfig {
            lambda,
            k,
            clusters: k_clusters,
            metric,
            selected,
        },
        report,
        effective_clusters: hard.effective_clusters,
        warnings: Vec::new(),
    })
}
