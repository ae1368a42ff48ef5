mod common;

use chainbsde::{
    distort_rates, drift, eval_minmaxvar, eval_rate_uncertainty, Driver, DriverSpec, SquareMatrix, State,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::random_rate_matrix;

/// Step-by-step distortion over the sorted states the chain can reach, plus
/// the current state; every other state keeps a zero rate.
fn oracle_distort(z: &[f64], a: &[Vec<f64>], s: usize, gamma: f64) -> Vec<f64> {
    let n = z.len();
    let mut idx: Vec<usize> = (0..n).filter(|&i| i == s || a[i][s] > 0.0).collect();
    let m = idx.len();
    // insertion sort by (z, index)
    for i in 1..m {
        let mut k = i;
        while k > 0 && (z[idx[k - 1]] > z[idx[k]] || (z[idx[k - 1]] == z[idx[k]] && idx[k - 1] > idx[k])) {
            idx.swap(k - 1, k);
            k -= 1;
        }
    }
    let w: Vec<f64> = idx.iter().map(|&i| if i == s { 0.0 } else { a[i][s] }).collect();
    let mut g = vec![0.0; m];
    g[0] = w[0];
    for k in 1..m {
        g[k] = g[k - 1] + w[k];
    }
    let (g1, gn) = (g[0], g[m - 1]);
    let psi = |x: f64| {
        if gn == g1 {
            return x;
        }
        let u = (x - g1) / (gn - g1);
        (1.0 - (1.0 - u.powf(1.0 / (1.0 + gamma))).powf(1.0 + gamma)) * (gn - g1) + g1
    };
    let mut q_sorted = vec![0.0; m];
    q_sorted[0] = g1;
    for k in 1..m {
        q_sorted[k] = psi(g[k]) - psi(g[k - 1]);
    }
    let mut q = vec![0.0; n];
    for k in 0..m {
        q[idx[k]] = q_sorted[k];
    }
    q[s] = 0.0;
    let off: f64 = q.iter().sum();
    q[s] = -off;
    q
}

fn fixture_matrix() -> SquareMatrix<f64> {
    // column 0: rates 1, 2, 3 to states 1, 2, 3
    let mut a = SquareMatrix::zeros(4);
    for (i, r) in [(1, 1.0), (2, 2.0), (3, 3.0)] {
        a[(i, 0)] = r;
    }
    a[(0, 0)] = -6.0;
    for j in 1..4 {
        a[(0, j)] = 1.0;
        a[(j, j)] = -1.0;
    }
    a
}

#[test]
fn four_state_fixture_matches_high_precision_values() {
    let a = fixture_matrix();
    let z = [0.0, 3.0, 2.0, 1.0];
    let d = distort_rates(&z, &a, State(0), 0.1).unwrap();
    assert_eq!(d.order, vec![0, 3, 2, 1]);
    assert_eq!(d.cumulative, vec![0.0, 3.0, 5.0, 6.0]);
    let expected = [-6.0, 0.759_446_537_276_417_6, 1.840_054_724_853_581_8, 3.400_498_737_870_000_6];
    for (got, want) in d.rates.iter().zip(expected) {
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
    let f = eval_minmaxvar(State(0), &z, &a, 0.1).unwrap();
    assert!((f - -0.641_052_200_593_586_2).abs() <= 1e-12, "{f}");
    assert_eq!(oracle_distort(&z, &a.to_rows(), 0, 0.1).len(), 4);
}

fn random_fixture(rng: &mut ChaCha8Rng) -> (Vec<f64>, SquareMatrix<f64>, usize) {
    let n = rng.gen_range(2..9);
    let a = random_rate_matrix(rng, n, 5.0, 0.3);
    let z: Vec<f64> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.2) {
                // force some ties
                rng.gen_range(0..3) as f64
            } else {
                rng.gen_range(-10.0..10.0)
            }
        })
        .collect();
    let s = rng.gen_range(0..n);
    (z, a, s)
}

#[test]
fn distortion_agrees_with_stepwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (z, a, s) = random_fixture(&mut rng);
        let gamma = rng.gen_range(0.01..2.0);
        let d = distort_rates(&z, &a, State(s), gamma).unwrap();
        let o = oracle_distort(&z, &a.to_rows(), s, gamma);
        for (x, y) in d.rates.iter().zip(&o) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()), "{:?} vs {:?}", d.rates, o);
        }
    }
}

#[test]
fn distortion_conserves_mass_and_stays_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let (z, a, s) = random_fixture(&mut rng);
        let gamma = rng.gen_range(0.0..3.0);
        let d = distort_rates(&z, &a, State(s), gamma).unwrap();
        let original: f64 = (0..z.len()).filter(|&i| i != s).map(|i| a[(i, s)]).sum();
        assert!((d.off_current_mass() - original).abs() <= 1e-10);
        assert!((d.rates.iter().sum::<f64>()).abs() <= 1e-10);
        for (i, &q) in d.rates.iter().enumerate() {
            if i != s {
                assert!(q >= -1e-12, "{q}");
            }
        }
    }
}

#[test]
fn gamma_zero_returns_original_rates_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let (z, a, s) = random_fixture(&mut rng);
        let d = distort_rates(&z, &a, State(s), 0.0).unwrap();
        for i in 0..z.len() {
            assert_eq!(d.rates[i], a[(i, s)]);
        }
        assert_eq!(eval_minmaxvar(State(s), &z, &a, 0.0).unwrap(), 0.0);
    }
}

#[test]
fn minmaxvar_penalty_is_never_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..1000 {
        let (z, a, s) = random_fixture(&mut rng);
        let f = eval_minmaxvar(State(s), &z, &a, rng.gen_range(0.0..3.0)).unwrap();
        assert!(f <= 1e-12, "{f}");
    }
}

#[test]
fn ties_break_by_state_index() {
    let mut a = SquareMatrix::zeros(3);
    a[(1, 0)] = 2.0;
    a[(2, 0)] = 1.0;
    a[(0, 0)] = -3.0;
    let d = distort_rates(&[5.0, 1.0, 1.0], &a, State(0), 0.5).unwrap();
    assert_eq!(d.order, vec![1, 2, 0]);
    let d = distort_rates(&[0.0, 1.0, 1.0], &a, State(0), 0.5).unwrap();
    assert_eq!(d.order, vec![0, 1, 2]);
    // same input, same answer
    let again = distort_rates(&[0.0, 1.0, 1.0], &a, State(0), 0.5).unwrap();
    assert_eq!(d, again);
}

/// Moves that stay inside the `∼_M` class: shift by a constant, or move a
/// coordinate the chain cannot reach anywhere.
fn equivalent_move(z: &[f64], a: &SquareMatrix<f64>, s: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c = rng.gen_range(-50.0..50.0);
    let mut w: Vec<f64> = z.iter().map(|v| v + c).collect();
    for (j, wj) in w.iter_mut().enumerate() {
        if j != s && a[(j, s)] == 0.0 {
            *wj = rng.gen_range(-100.0..100.0);
        }
    }
    w
}

#[test]
fn drivers_are_invariant_under_m_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..1000 {
        let (z, a, s) = random_fixture(&mut rng);
        let w = equivalent_move(&z, &a, s, &mut rng);
        let alpha = rng.gen_range(1.0..3.0);
        let gamma = rng.gen_range(0.0..2.0);
        let r1 = eval_rate_uncertainty(State(s), &z, &a, alpha).unwrap();
        let r2 = eval_rate_uncertainty(State(s), &w, &a, alpha).unwrap();
        assert!((r1 - r2).abs() <= 1e-10 * (1.0 + r1.abs()), "{r1} vs {r2}");
        let m1 = eval_minmaxvar(State(s), &z, &a, gamma).unwrap();
        let m2 = eval_minmaxvar(State(s), &w, &a, gamma).unwrap();
        assert!((m1 - m2).abs() <= 1e-10 * (1.0 + m1.abs()), "{m1} vs {m2}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn positive_homogeneity(seed in any::<u64>(), lambda in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (z, a, s) = random_fixture(&mut rng);
        let scaled: Vec<f64> = z.iter().map(|v| v * lambda).collect();
        for spec in [DriverSpec::RateUncertainty { alpha: 1.7 }, DriverSpec::Minmaxvar { gamma: 0.4 }] {
            let f = spec.eval_with(s, 0.0, 0.0, &z, &a);
            let g = spec.eval_with(s, 0.0, 0.0, &scaled, &a);
            prop_assert!((g - lambda * f).abs() <= 1e-10 * (1.0 + (lambda * f).abs()));
        }
    }

    #[test]
    fn rate_uncertainty_is_concave_and_non_positive(seed in any::<u64>(), w in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (z1, a, s) = random_fixture(&mut rng);
        let z2: Vec<f64> = z1.iter().map(|_| rng.gen_range(-10.0..10.0)).collect();
        let mix: Vec<f64> = z1.iter().zip(&z2).map(|(x, y)| w * x + (1.0 - w) * y).collect();
        let alpha = 1.5;
        let f = |z: &[f64]| eval_rate_uncertainty(State(s), z, &a, alpha).unwrap();
        prop_assert!(f(&mix) >= w * f(&z1) + (1.0 - w) * f(&z2) - 1e-10);
        let d = drift(&z1, &a, s);
        prop_assert!(f(&z1) <= 1e-12);
        prop_assert!(f(&z1) <= d / alpha - d + 1e-12 && f(&z1) <= alpha * d - d + 1e-12);
    }

    #[test]
    fn minmaxvar_concave_when_current_state_is_lowest(seed in any::<u64>(), w in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut z1, a, s) = random_fixture(&mut rng);
        let mut z2: Vec<f64> = z1.iter().map(|_| rng.gen_range(-10.0..10.0)).collect();
        z1[s] = -20.0;
        z2[s] = -20.0;
        let mix: Vec<f64> = z1.iter().zip(&z2).map(|(x, y)| w * x + (1.0 - w) * y).collect();
        let f = |z: &[f64]| eval_minmaxvar(State(s), z, &a, 0.7).unwrap();
        prop_assert!(f(&mix) >= w * f(&z1) + (1.0 - w) * f(&z2) - 1e-10);
    }
}
