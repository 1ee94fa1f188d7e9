//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any binding criterion fails.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use cns_core::chain::{iterate_smoothing, solve_resolvent};
use cns_core::data::{load_csv, preprocess, LabelColumn, PreprocessOptions};
use cns_core::eval::{accuracy, ami, ari, contingency, ContingencyTable};
use cns_core::select::{grid_search, idealized_improvement, idealized_limits, reference, GridSpec};
use cns_core::synth::{gaussian_blobs, random_centres, two_blobs};
use cns_core::{DistanceMetric, LabelVector, TransitionMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

const ORACLE_TOL: f64 = 1e-8;
const ABSORPTION_TOL: f64 = 1e-9;
const IDEALIZED_TOL: f64 = 1e-9;
const DOMINANCE_TOL: f64 = 1e-12;
const ARI_TOL: f64 = 1e-12;
const INDEPENDENT_AMI_BOUND: f64 = 0.05;
const REFERENCE_AMI_WINDOW: f64 = 10.0;
const SOLVER_TOL: f64 = 1e-12;

const ORACLE_SECONDS: f64 = 10.0;
const RECOVERY_SECONDS: f64 = 5.0;
const SCALE_SECONDS: f64 = 300.0;
/// Well below the 800 MB a dense 10,000 × 10,000 matrix would need.
const SCALE_PEAK_RSS_MB: f64 = 400.0;

struct Outcome {
    id: u8,
    binding: bool,
    passed: bool,
    detail: String,
}

fn report(outcomes: &mut Vec<Outcome>, id: u8, binding: bool, passed: bool, detail: String) {
    let status = match (passed, binding) {
        (true, _) => "PASS",
        (false, true) => "FAIL",
        (false, false) => "SOFT-FAIL",
    };
    println!("criterion {id}: {status} {detail}");
    outcomes.push(Outcome {
        id,
        binding,
        passed,
        detail,
    });
}

struct OracleCase {
    w: TransitionMatrix,
    lambda: f64,
}

fn oracle_cases() -> Vec<OracleCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_101);
    let lambdas = [0.05, 0.3, 0.7];
    (0..50)
        .map(|i| {
            let n = rng.random_range(20..=100);
            let k = rng.random_range(2..=8);
            OracleCase {
                w: random_graph(&mut rng, n, k),
                lambda: lambdas[i % 3],
            }
        })
        .collect()
}

fn oracle_equivalence(cases: &[OracleCase]) -> (bool, String) {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_dense, mut worst_iter) = (0.0f64, 0.0f64);
    for case in cases {
        let n = case.w.n();
        let clusters = rng.random_range(2..=5);
        let selected: Vec<usize> = rand::seq::index::sample(&mut rng, n, clusters).into_vec();
        let f = closed_form(&case.w, case.lambda, &selected, SOLVER_TOL);
        let f0 = initial(n, &selected);
        worst_dense = worst_dense.max(max_abs_diff(&f, &dense_limit(&case.w, case.lambda, &f0)));
        let (iterated, _) = iterate_smoothing(&case.w, case.lambda, &f0, 100_000, 1e-14).unwrap();
        worst_iter = worst_iter.max(max_abs_diff_soft(&f, &iterated));
    }
    let secs = started.elapsed().as_secs_f64();
    let ok = worst_dense <= ORACLE_TOL && worst_iter <= ORACLE_TOL && secs < ORACLE_SECONDS;
    (
        ok,
        format!(
            "{} graphs: max |F - dense| = {worst_dense:.2e}, max |F - iterated| = {worst_iter:.2e} (tol {ORACLE_TOL:e}), {secs:.2}s (limit {ORACLE_SECONDS}s)",
            cases.len()
        ),
    )
}

fn absorption_identity(cases: &[OracleCase]) -> (bool, String) {
    let mut worst = 0.0f64;
    for case in cases {
        let ones = vec![1.0; case.w.n()];
        let (x, _, _) = solve_resolvent(&case.w, case.lambda, &ones, SOLVER_TOL).unwrap();
        worst = worst.max(x.iter().map(|v| (case.lambda * v - 1.0).abs()).fold(0.0, f64::max));
    }
    (
        worst <= ABSORPTION_TOL,
        format!("max |λ M⁻¹ 1 - 1| = {worst:.2e} over {} graphs (tol {ABSORPTION_TOL:e})", cases.len()),
    )
}

/// Each cluster is an informative point followed by `k + 1` members. A
/// member's neighbours are the next `k - 1` members round the cluster plus
/// the informative point; the informative point's are itself and the first
/// `k - 1` members.
fn idealized_graph(k: usize, clusters: usize) -> (TransitionMatrix, Vec<usize>) {
    let members = k + 1;
    let size = members + 1;
    let n = clusters * size;
    let mut lists = Vec::with_capacity(n);
    let mut selected = Vec::with_capacity(clusters);
    for c in 0..clusters {
        let base = c * size;
        selected.push(base);
        lists.push((0..k).map(|t| base + t).collect());
        for m in 0..members {
            let mut row = vec![base];
            row.extend((1..k).map(|t| base + 1 + (m + t) % members));
            lists.push(row);
        }
    }
    (TransitionMatrix::from_neighbour_lists(n, k, lists).unwrap(), selected)
}

fn idealized_scenario() -> (bool, String) {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for k in [2, 4, 8] {
        for clusters in [2, 3, 5] {
            for lambda in [0.1, 0.5] {
                let (w, selected) = idealized_graph(k, clusters);
                let f = closed_form(&w, lambda, &selected, SOLVER_TOL);
                let size = k + 2;
                for (c, &chosen) in selected.iter().enumerate() {
                    let (member, informative) = idealized_limits(lambda, k, clusters, c);
                    for i in c * size..(c + 1) * size {
                        let expected = if i == chosen { &informative } else { &member };
                        for (col, e) in expected.iter().enumerate() {
                            worst = worst.max((f.values()[[i, col]] - e).abs());
                        }
                    }
                }
                cases += 1;
            }
        }
    }
    (
        worst <= IDEALIZED_TOL,
        format!("{cases} (k, K, λ) settings: max deviation from closed-form limits {worst:.2e} (tol {IDEALIZED_TOL:e})"),
    )
}

fn r_dominance() -> (bool, String) {
    let mut worst = f64::INFINITY;
    let mut worst_equality = 0.0f64;
    let mut combos = 0;
    for n in [10, 18, 50, 97, 200, 1000] {
        for k in [1, 2, 3, 5, 8] {
            if k >= n {
                continue;
            }
            for lambda in [0.01, 0.1, 0.3, 0.7] {
                combos += 1;
                let r = reference(lambda, k, n);
                for clusters in 1..=n {
                    let gap = r - idealized_improvement(lambda, k, clusters, n);
                    worst = worst.min(gap);
                    if n == k * clusters * clusters {
                        worst_equality = worst_equality.max(gap.abs());
                    }
                }
            }
        }
    }
    let ok = combos >= 100 && worst >= -DOMINANCE_TOL && worst_equality <= DOMINANCE_TOL;
    (
        ok,
        format!(
            "{combos} (n, k, λ) settings: min R - improvement = {worst:.2e}, max |gap| at n = kK² is {worst_equality:.2e} (tol {DOMINANCE_TOL:e})"
        ),
    )
}

fn synthetic_recovery() -> (bool, String) {
    let (raw, truth) = two_blobs(10, 100, 10.0, 42).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for metric in [DistanceMetric::Euclidean, DistanceMetric::Cosine] {
        let started = Instant::now();
        let prepared = preprocess(&raw, PreprocessOptions::default()).unwrap();
        let fit = grid_search(&prepared.data, metric, &GridSpec::default()).unwrap();
        let secs = started.elapsed().as_secs_f64();
        let score = ari(&contingency(&truth, &fit.result.labels).unwrap());
        let pass = fit.best.clusters == 2 && (score - 1.0).abs() <= ARI_TOL && secs < RECOVERY_SECONDS;
        ok &= pass;
        parts.push(format!("{metric}: K = {}, ARI = {score}, {secs:.2}s", fit.best.clusters));
    }
    (ok, format!("{} (need K = 2, ARI = 1, < {RECOVERY_SECONDS}s)", parts.join("; ")))
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn seeds_path() -> Option<PathBuf> {
    std::env::var_os("CNS_SEEDS_CSV")
        .map(PathBuf::from)
        .or_else(|| Some(data_dir().join("seeds.csv")))
        .filter(|p| p.exists())
}

fn published_benchmarks() -> (bool, String) {
    let targets = [
        ("iris", Some(data_dir().join("iris.csv")), 57.68, 66.91),
        ("wine", Some(data_dir().join("wine.csv")), 40.23, 81.91),
        ("seeds", seeds_path(), 69.40, 65.90),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, path, published_e, published_c) in targets {
        let Some(path) = path else {
            ok = false;
            parts.push(format!("{name}: UNAVAILABLE (set CNS_SEEDS_CSV)"));
            continue;
        };
        let label = LabelColumn::Name("class".into());
        let (raw, truth) = load_csv(&path, Some(&label), true).unwrap();
        let truth = truth.unwrap();
        let prepared = preprocess(&raw, PreprocessOptions::default()).unwrap();
        for (metric, published) in [(DistanceMetric::Euclidean, published_e), (DistanceMetric::Cosine, published_c)] {
            let fit = grid_search(&prepared.data, metric, &GridSpec::default()).unwrap();
            let score = 100.0 * ami(&contingency(&truth, &fit.result.labels).unwrap());
            let within = (score - published).abs() <= REFERENCE_AMI_WINDOW;
            ok &= within;
            parts.push(format!(
                "{name}/{metric}: AMI {score:.2} vs {published:.2} [{}] (k = {}, λ = {:.4}, K = {})",
                if within { "ok" } else { "out" },
                fit.best.k,
                fit.best.lambda,
                fit.best.clusters
            ));
            if !within {
                println!("  criterion table for {name}/{metric}:");
                println!("  {:>4} {:>8} {:>3} {:>10} {:>10} {:>10} {:>4}", "k", "lambda", "K", "C", "R", "C/R", "eff");
                for row in &fit.table {
                    println!(
                        "  {:>4} {:>8.4} {:>3} {:>10.6} {:>10.6} {:>10.4} {:>4}",
                        row.k, row.lambda, row.clusters, row.c, row.r, row.score, row.effective_clusters
                    );
                }
            }
        }
    }
    (ok, format!("{} (window ±{REFERENCE_AMI_WINDOW})", parts.join("; ")))
}

fn random_labels<R: Rng>(rng: &mut R, n: usize, groups: usize) -> LabelVector {
    LabelVector::new((0..n).map(|_| rng.random_range(0..groups)).collect()).unwrap()
}

fn metric_correctness() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut accuracy_mismatches = 0;
    for _ in 0..200 {
        let g = rng.random_range(1..=6);
        let c = rng.random_range(1..=6);
        let counts: Vec<u64> = (0..g * c).map(|_| rng.random_range(0..6)).collect();
        let mut counts = counts;
        counts[0] += 1;
        let table = ContingencyTable::from_counts(g, c, counts.clone()).unwrap();
        let expected = brute_force_matching(&counts, g, c) as f64 / table.total() as f64;
        if accuracy(&table) != expected {
            accuracy_mismatches += 1;
        }
    }
    let mut worst_ari = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..=40);
        let (gt, gp) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let truth = random_labels(&mut rng, n, gt);
        let pred = random_labels(&mut rng, n, gp);
        let got = ari(&contingency(&truth, &pred).unwrap());
        worst_ari = worst_ari.max((got - pair_ari(truth.labels(), pred.labels())).abs());
    }
    let same = random_labels(&mut rng, 60, 4);
    let identical = ami(&contingency(&same, &same).unwrap());
    // Every (truth, pred) pair of a 6 × 6 grid occurs equally often.
    let truth = LabelVector::new((0..360).map(|i| (i / 6) % 6).collect()).unwrap();
    let pred = LabelVector::new((0..360).map(|i| i % 6).collect()).unwrap();
    let independent = ami(&contingency(&truth, &pred).unwrap());
    let ok = accuracy_mismatches == 0
        && worst_ari <= ARI_TOL
        && identical == 1.0
        && independent.abs() <= INDEPENDENT_AMI_BOUND;
    (
        ok,
        format!(
            "accuracy mismatches {accuracy_mismatches}/200; max ARI error {worst_ari:.2e} (tol {ARI_TOL:e}); AMI identical = {identical}; AMI independent grid = {independent:.4} (bound {INDEPENDENT_AMI_BOUND})"
        ),
    )
}

fn scale_sanity() -> (bool, String) {
    let centres = random_centres(10, 16, 12.0, 5);
    let (raw, truth) = gaussian_blobs(&centres, 1000, 1.0, 6).unwrap();
    let started = Instant::now();
    let prepared = preprocess(&raw, PreprocessOptions::default()).unwrap();
    let fit = grid_search(&prepared.data, DistanceMetric::Euclidean, &GridSpec::default()).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let peak_mb = peak_rss_kb().map(|kb| kb as f64 / 1024.0);
    let score = ari(&contingency(&truth, &fit.result.labels).unwrap());
    let memory_ok = peak_mb.is_none_or(|mb| mb < SCALE_PEAK_RSS_MB);
    let ok = secs < SCALE_SECONDS && memory_ok;
    (
        ok,
        format!(
            "n = 10000, d = 16: {secs:.1}s (limit {SCALE_SECONDS}s), peak RSS {} (limit {SCALE_PEAK_RSS_MB} MB), {} cells, K = {}, ARI = {score:.3}",
            peak_mb.map_or("unknown".into(), |mb| format!("{mb:.0} MB")),
            fit.table.len(),
            fit.best.clusters
        ),
    )
}

#[test]
fn acceptance() {
    let mut outcomes = Vec::new();
    let cases = oracle_cases();

    let (ok, detail) = oracle_equivalence(&cases);
    report(&mut outcomes, 1, true, ok, detail);
    let (ok, detail) = absorption_identity(&cases);
    report(&mut outcomes, 2, true, ok, detail);
    let (ok, detail) = idealized_scenario();
    report(&mut outcomes, 3, true, ok, detail);
    let (ok, detail) = r_dominance();
    report(&mut outcomes, 4, true, ok, detail);
    let (ok, detail) = synthetic_recovery();
    report(&mut outcomes, 5, true, ok, detail);
    let (ok, detail) = published_benchmarks();
    report(&mut outcomes, 6, false, ok, detail);
    let (ok, detail) = metric_correctness();
    report(&mut outcomes, 7, true, ok, detail);
    let (ok, detail) = scale_sanity();
    report(&mut outcomes, 8, true, ok, detail);

    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| o.binding && !o.passed)
        .map(|o| format!("{}: {}", o.id, o.detail))
        .collect();
    assert!(failed.is_empty(), "binding criteria failed:\n{}", failed.join("\n"));
}
