use std::f64::consts::PI;

use chaoscorr_core::analytic::{cell_averaged_g3, MAX_PERMANENT_ORDER};
use chaoscorr_core::{
    expected_contrast_with_binning, g2, g3, g_n, gamma, permanent, CoherenceMatrix, Error,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BW: f64 = 2.0 * PI * 5.0e6;
const TAU_C: f64 = 0.2e-6;

/// Sum over all permutations, the definition of the permanent.
fn permutation_sum(a: &[f64], n: usize) -> f64 {
    fn rec(a: &[f64], n: usize, row: usize, used: &mut [bool], acc: f64) -> f64 {
        if row == n {
            return acc;
        }
        let mut total = 0.0;
        for col in 0..n {
            if !used[col] {
                used[col] = true;
                total += rec(a, n, row + 1, used, acc * a[row * n + col]);
                used[col] = false;
            }
        }
        total
    }
    rec(a, n, 0, &mut vec![false; n], 1.0)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[test]
fn permanent_matches_permutation_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=6 {
        for _ in 0..200 {
            let a: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let fast = permanent(&a, n).unwrap();
            let slow = permutation_sum(&a, n);
            assert!(
                (fast - slow).abs() <= 1e-10 * slow.abs().max(f64::MIN_POSITIVE),
                "n={n}: {fast} vs {slow}"
            );
        }
    }
}

#[test]
fn permanent_examples() {
    assert_eq!(permanent(&[1.0; 9], 3).unwrap(), 6.0);
    for n in 1..=12 {
        let mut id = vec![0.0; n * n];
        for i in 0..n {
            id[i * n + i] = 1.0;
        }
        assert_eq!(permanent(&id, n).unwrap(), 1.0);
    }
    assert!(matches!(
        permanent(&vec![1.0; 21 * 21], 21),
        Err(Error::OrderTooLarge(21))
    ));
    assert_eq!(MAX_PERMANENT_ORDER, 20);
}

#[test]
fn g_n_equal_times_is_factorial_exactly() {
    for n in 1..=10 {
        let times = vec![3.7e-7; n];
        assert_eq!(g_n(&times, BW).unwrap(), factorial(n), "N={n}");
        assert_eq!(permanent(&vec![1.0; n * n], n).unwrap(), factorial(n));
    }
    assert_eq!(g_n(&[0.0; 4], BW).unwrap(), 24.0);
    assert_eq!(g_n(&[1.0], BW).unwrap(), 1.0);
}

#[test]
fn g_n_of_three_is_g3_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10_000 {
        let t: [f64; 3] = std::array::from_fn(|_| rng.random_range(-3.0..3.0) * TAU_C);
        let perm = g_n(&t, BW).unwrap();
        let closed = g3(t[0], t[1], t[2], BW);
        assert!(
            (perm - closed).abs() <= 1e-12 * closed.abs(),
            "{t:?}: {perm} vs {closed}"
        );
    }
}

#[test]
fn g_n_of_two_is_g2() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let (a, b) = (
            rng.random_range(-3.0..3.0) * TAU_C,
            rng.random_range(-3.0..3.0) * TAU_C,
        );
        let perm = g_n(&[a, b], BW).unwrap();
        assert!((perm - g2(a - b, BW)).abs() <= 1e-14 * perm);
    }
}

#[test]
fn g3_bounds_over_a_million_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (mut lo, mut hi) = (f64::MAX, f64::MIN);
    for _ in 0..1_000_000 {
        let t: [f64; 3] = std::array::from_fn(|_| rng.random_range(-4.0..4.0) * TAU_C);
        let v = g3(t[0], t[1], t[2], BW);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    assert!(lo > 0.0, "minimum {lo}");
    assert!(hi <= 6.0, "maximum {hi}");
}

#[test]
fn g3_reduces_to_g2_when_one_time_is_far() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..1000 {
        let t1 = rng.random_range(-2.0..2.0) * TAU_C;
        let t2 = rng.random_range(-2.0..2.0) * TAU_C;
        let t3 = rng.random_range(1.0e3..1.0e4) * TAU_C * if rng.random() { 1.0 } else { -1.0 };
        assert!((g3(t1, t2, t3, BW) - g2(t1 - t2, BW)).abs() < 1e-6);
    }
}

#[test]
fn reference_values() {
    assert_eq!(gamma(0.0, BW), 1.0);
    assert!(gamma(TAU_C, BW).abs() < 1e-15);
    assert!((gamma(TAU_C / 2.0, BW) - 2.0 / PI).abs() < 1e-15);
    assert_eq!(g2(0.0, BW), 2.0);
    assert!((g2(TAU_C / 2.0, BW) - 1.405).abs() < 1e-3);
    assert_eq!(g3(0.0, 0.0, 0.0, BW), 6.0);
    assert!((g3(0.0, 0.0, 1.0, BW) - 2.0).abs() < 1e-12);
    assert!((g3(0.0, 1.0, 2.0, BW) - 1.0).abs() < 1e-12);
}

#[test]
fn coherence_matrix_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for n in 1..=8 {
        let times: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-3.0..3.0) * TAU_C)
            .collect();
        let m = CoherenceMatrix::from_times(&times, BW);
        for i in 0..n {
            assert_eq!(m.get(i, i), 1.0);
            for j in 0..n {
                assert_eq!(m.get(i, j), m.get(j, i));
                assert!(m.get(i, j) > -0.2173 && m.get(i, j) <= 1.0);
            }
        }
        assert_eq!(m.permanent().unwrap(), g_n(&times, BW).unwrap());
    }
}

#[test]
fn binning_prediction_matches_tensor_quadrature() {
    for frac in [0.05, 0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 4.0] {
        let w = frac * TAU_C;
        let fast = expected_contrast_with_binning(w, BW);
        let cube = cell_averaged_g3(0.0, 0.0, w, BW);
        assert!(
            (fast - cube).abs() <= 1e-6 * cube,
            "Δ={frac}τc: {fast} vs {cube}"
        );
    }
}

#[test]
fn binning_prediction_limits_and_monotonicity() {
    assert!((expected_contrast_with_binning(1e-6 * TAU_C, BW) - 6.0).abs() < 1e-9);
    let wide = expected_contrast_with_binning(1e3 * TAU_C, BW);
    assert!(wide > 1.0 && wide < 1.01, "{wide}");
    assert!(
        expected_contrast_with_binning(TAU_C / 10.0, BW)
            > expected_contrast_with_binning(TAU_C, BW)
    );
    let mut last = f64::INFINITY;
    for k in 1..=200 {
        let v = expected_contrast_with_binning(k as f64 * 0.025 * TAU_C, BW);
        assert!(v < last, "not decreasing at step {k}");
        last = v;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn g3_is_symmetric_and_shift_invariant(
        t1 in -5.0f64..5.0, t2 in -5.0f64..5.0, t3 in -5.0f64..5.0, shift in -100.0f64..100.0,
    ) {
        let (t1, t2, t3, shift) = (t1 * TAU_C, t2 * TAU_C, t3 * TAU_C, shift * TAU_C);
        let base = g3(t1, t2, t3, BW);
        for v in [g3(t2, t1, t3, BW), g3(t3, t2, t1, BW), g3(t1, t3, t2, BW), g3(t2, t3, t1, BW), g3(t3, t1, t2, BW)] {
            prop_assert!((v - base).abs() <= 1e-12 * base);
        }
        let shifted = g3(t1 + shift, t2 + shift, t3 + shift, BW);
        prop_assert!((shifted - base).abs() <= 1e-6 * base);
    }

    #[test]
    fn permanent_is_invariant_under_row_and_column_swaps(
        entries in prop::collection::vec(-1.0f64..1.0, 25), r in 0usize..5, c in 0usize..5,
    ) {
        let n = 5;
        let p = permanent(&entries, n).unwrap();
        let mut swapped = entries.clone();
        for k in 0..n {
            swapped.swap(k * n, k * n + c);
        }
        for k in 0..n {
            swapped.swap(k, r * n + k);
        }
        let q = permanent(&swapped, n).unwrap();
        let scale = permanent(&entries.iter().map(|v| v.abs()).collect::<Vec<_>>(), n).unwrap();
        prop_assert!((p - q).abs() <= 1e-12 * scale.max(1e-300));
    }
}
