mod common;

use cns_core::eval::{accuracy, ami, ari, contingency, evaluate, expected_mutual_information, ContingencyTable};
use cns_core::LabelVector;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn ln_factorial(n: u64) -> f64 {
    (1..=n).map(|v| (v as f64).ln()).sum()
}

/// E[MI] by enumerating every cell value with its hypergeometric weight.
fn emi_oracle(table: &ContingencyTable) -> f64 {
    let n = table.total();
    let nf = n as f64;
    let mut total = 0.0;
    for &a in table.row_sums() {
        for &b in table.col_sums() {
            let lo = (a + b).saturating_sub(n).max(1);
            for nij in lo..=a.min(b) {
                let log_p = ln_factorial(a) + ln_factorial(b) + ln_factorial(n - a) + ln_factorial(n - b)
                    - ln_factorial(n)
                    - ln_factorial(nij)
                    - ln_factorial(a - nij)
                    - ln_factorial(b - nij)
                    - ln_factorial(n + nij - a - b);
                let x = nij as f64;
                total += x / nf * (nf * x / (a as f64 * b as f64)).ln() * log_p.exp();
            }
        }
    }
    total
}

fn labels(v: Vec<usize>) -> LabelVector {
    LabelVector::new(v).unwrap()
}

#[test]
fn expected_mutual_information_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    for _ in 0..50 {
        let g = rng.random_range(1..=5);
        let c = rng.random_range(1..=5);
        let mut counts: Vec<u64> = (0..g * c).map(|_| rng.random_range(0..8)).collect();
        counts[0] += 1;
        let t = ContingencyTable::from_counts(g, c, counts).unwrap();
        let (got, want) = (expected_mutual_information(&t), emi_oracle(&t));
        assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
    }
}

#[test]
fn accuracy_is_at_least_best_cell() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for _ in 0..100 {
        let g = rng.random_range(1..=6);
        let c = rng.random_range(1..=6);
        let mut counts: Vec<u64> = (0..g * c).map(|_| rng.random_range(0..9)).collect();
        counts[0] += 1;
        let best = *counts.iter().max().unwrap();
        let t = ContingencyTable::from_counts(g, c, counts.clone()).unwrap();
        assert!(accuracy(&t) >= best as f64 / t.total() as f64);
        assert_eq!(accuracy(&t), brute_force_matching(&counts, g, c) as f64 / t.total() as f64);
    }
}

#[test]
fn singletons_against_one_class_have_zero_ari() {
    let truth = labels(vec![0; 6]);
    let pred = labels((0..6).collect());
    assert_eq!(ari(&contingency(&truth, &pred).unwrap()), 0.0);
}

proptest! {
    #[test]
    fn metrics_ignore_cluster_names(seed in 0u64..10_000, n in 2usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = labels((0..n).map(|_| rng.random_range(0..4)).collect());
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
        let mut rename: Vec<usize> = (0..5).collect();
        rename.shuffle(&mut rng);
        let renamed = labels(pred.iter().map(|&p| rename[p]).collect());
        let pred = labels(pred);
        let a = evaluate(&truth, &pred).unwrap();
        let b = evaluate(&truth, &renamed).unwrap();
        prop_assert_eq!(a.accuracy, b.accuracy);
        prop_assert!((a.ari - b.ari).abs() <= 1e-12);
        prop_assert!((a.ami - b.ami).abs() <= 1e-12);
    }

    #[test]
    fn ari_and_ami_are_symmetric(seed in 0u64..10_000, n in 2usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = labels((0..n).map(|_| rng.random_range(0..4)).collect());
        let y = labels((0..n).map(|_| rng.random_range(0..3)).collect());
        let t = contingency(&x, &y).unwrap();
        let u = contingency(&y, &x).unwrap();
        prop_assert!((ari(&t) - ari(&u)).abs() <= 1e-12);
        prop_assert!((ami(&t) - ami(&u)).abs() <= 1e-12);
        prop_assert!((ari(&t) - pair_ari(x.labels(), y.labels())).abs() <= 1e-12);
        let m = evaluate(&x, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.accuracy));
        prop_assert!(m.ari <= 1.0 + 1e-12);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&m.ami));
    }
}
