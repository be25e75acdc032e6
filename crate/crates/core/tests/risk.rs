use hedgesim::risk::{
    confidence_bands, expected_shortfall, mean_and_error, quantile, summary_table, SummaryColumn,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn hand_case() {
    let x = [-1.0, -3.0, -4.0, -2.0];
    assert_eq!(quantile(&x, 0.5).unwrap(), -2.0);
    assert_eq!(expected_shortfall(&x, 0.5).unwrap(), 3.5);
}

#[test]
fn small_alpha_reads_the_minimum() {
    let x = [3.0, -7.5, 2.0, 0.0];
    assert_eq!(quantile(&x, 0.2).unwrap(), -7.5);
    assert_eq!(expected_shortfall(&x, 0.2).unwrap(), 7.5);
}

#[test]
fn constant_sample() {
    let x = vec![0.25; 17];
    for a in [0.01, 0.35, 0.99] {
        assert_eq!(expected_shortfall(&x, a).unwrap(), -0.25);
    }
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(expected_shortfall(&[], 0.5).is_err());
    assert!(expected_shortfall(&[1.0], 0.0).is_err());
    assert!(expected_shortfall(&[1.0], 1.0).is_err());
    assert!(quantile(&[f64::NAN], 0.5).is_err());
}

/// Mean of the worst `nα` outcomes with the boundary one counted fractionally.
fn tail_mean_oracle(x: &[f64], alpha: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = x.len() as f64 * alpha;
    let mut acc = 0.0;
    let mut left = m;
    for v in s {
        let w = left.min(1.0);
        if w <= 0.0 {
            break;
        }
        acc += w * v;
        left -= w;
    }
    -acc / m
}

fn sample(seed: u64, n: usize, atoms: bool) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            if atoms {
                rng.random_range(-5i32..5) as f64
            } else {
                rng.random_range(-1.0..1.0) * rng.random_range(0.0..3.0)
            }
        })
        .collect()
}

#[test]
fn quantile_matches_a_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 0..1000 {
        let n = rng.random_range(1..60);
        let x = sample(k, n, k % 2 == 0);
        let alpha: f64 = rng.random_range(0.001..0.999);
        let q = quantile(&x, alpha).unwrap();
        // sup{q : P[X < q] ≤ α}
        let below = x.iter().filter(|&&v| v < q).count() as f64 / n as f64;
        let above = x.iter().filter(|&&v| v <= q).count() as f64 / n as f64;
        assert!(below <= alpha && above > alpha, "n={n} α={alpha} q={q}");
    }
}

const N: usize = 10_000;

fn tol(a: f64, b: f64) -> f64 {
    1e-12 * (1.0 + a.abs() + b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn equals_the_tail_mean(seed in any::<u64>(), alpha in 0.001f64..0.999, atoms in any::<bool>()) {
        let x = sample(seed, N, atoms);
        let es = expected_shortfall(&x, alpha).unwrap();
        let oracle = tail_mean_oracle(&x, alpha);
        prop_assert!((es - oracle).abs() < 1e-9 * (1.0 + oracle.abs()), "{es} vs {oracle}");
    }

    #[test]
    fn monotone(seed in any::<u64>(), alpha in 0.01f64..0.99, atoms in any::<bool>()) {
        let x1 = sample(seed, N, atoms);
        let gap = sample(seed ^ 1, N, false);
        let x2: Vec<f64> = x1.iter().zip(&gap).map(|(a, g)| a + g.abs()).collect();
        let (r1, r2) = (expected_shortfall(&x1, alpha).unwrap(), expected_shortfall(&x2, alpha).unwrap());
        prop_assert!(r1 >= r2 - tol(r1, r2));
    }

    #[test]
    fn sub_additive(seed in any::<u64>(), alpha in 0.01f64..0.99, atoms in any::<bool>()) {
        let x1 = sample(seed, N, atoms);
        let x2 = sample(seed.wrapping_add(7), N, !atoms);
        let sum: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + b).collect();
        let r = |x: &[f64]| expected_shortfall(x, alpha).unwrap();
        let (a, b, c) = (r(&sum), r(&x1), r(&x2));
        prop_assert!(a <= b + c + tol(a, b + c), "{a} > {b} + {c}");
    }

    #[test]
    fn positively_homogeneous(seed in any::<u64>(), alpha in 0.01f64..0.99, beta in 0.01f64..100.0, atoms in any::<bool>()) {
        let x = sample(seed, N, atoms);
        let scaled: Vec<f64> = x.iter().map(|v| beta * v).collect();
        let (a, b) = (expected_shortfall(&scaled, alpha).unwrap(), beta * expected_shortfall(&x, alpha).unwrap());
        prop_assert!((a - b).abs() < tol(a, b), "{a} vs {b}");
    }

    #[test]
    fn translation_invariant(seed in any::<u64>(), alpha in 0.01f64..0.99, shift in -50.0f64..50.0, atoms in any::<bool>()) {
        let x = sample(seed, N, atoms);
        let moved: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let (a, b) = (expected_shortfall(&moved, alpha).unwrap(), expected_shortfall(&x, alpha).unwrap() - shift);
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs() + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn bands_of_constant_paths_coincide() {
    let paths = vec![vec![1.0, 2.0, -0.5]; 9];
    let b = confidence_bands(&paths, 0.35).unwrap();
    assert_eq!(b.upper, b.mean);
    assert_eq!(b.lower, b.mean);
}

#[test]
fn bands_of_a_symmetric_sample_are_symmetric() {
    let base = sample(3, 500, false);
    let paths: Vec<Vec<f64>> = base.iter().flat_map(|&x| [vec![x, 2.0 * x], vec![-x, -2.0 * x]]).collect();
    let b = confidence_bands(&paths, 0.35).unwrap();
    for t in 0..2 {
        assert!(b.mean[t].abs() < 1e-12);
        assert!((b.upper[t] + b.lower[t]).abs() < 1e-12);
    }
}

#[test]
fn bands_match_a_per_date_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let paths: Vec<Vec<f64>> = (0..120).map(|_| (0..30).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let b = confidence_bands(&paths, 0.35).unwrap();
    for t in 0..30 {
        let col: Vec<f64> = paths.iter().map(|p| p[t]).collect();
        let neg: Vec<f64> = col.iter().map(|x| -x).collect();
        assert!((b.lower[t] + tail_mean_oracle(&col, 0.35)).abs() < 1e-12);
        assert!((b.upper[t] - tail_mean_oracle(&neg, 0.35)).abs() < 1e-12);
        assert!(b.lower[t] <= b.mean[t] && b.mean[t] <= b.upper[t]);
    }
    assert!(confidence_bands(&[vec![1.0], vec![1.0, 2.0]], 0.35).is_err());
}

#[test]
fn summary_reads_like_the_study_table() {
    // a sold contract worth 0.0839 to the buyer, hedged with losses
    let terminal = [-0.01, -0.05, 0.02, -0.08, -0.035];
    let c = SummaryColumn::from_terminal("vv", -0.0839, &terminal, -0.1122, 0.001, 0.35, 0).unwrap();
    let (m, _) = mean_and_error(&terminal);
    assert_eq!(c.initial_price, 0.0839);
    assert_eq!(c.hedging_cost, -m);
    assert!((c.implied_market_price() - (0.0839 - m)).abs() < 1e-15);
    assert_eq!(c.model_risk, expected_shortfall(&terminal, 0.35).unwrap());
    let csv = summary_table(&[c]);
    let rows: Vec<&str> = csv.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        &rows[..7],
        &["quantity", "initial_price", "expected_hedging_cost", "initial_plus_cost", "reference_price", "model_risk", "final_price"]
    );
}
