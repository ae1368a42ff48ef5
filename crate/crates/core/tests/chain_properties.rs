mod common;

use chainbsde::{
    m_equivalent, psi, seminorm_sq, simulate_path, Generator, SquareMatrix, State, ValidationOptions,
};
use num_rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use common::{expm, psi_brute, random_generator};

#[test]
fn psi_matches_entrywise_oracle_on_uniform_three_state() {
    let a = SquareMatrix::from_rows(vec![
        vec![-2.0, 1.0, 1.0],
        vec![1.0, -2.0, 1.0],
        vec![1.0, 1.0, -2.0],
    ])
    .unwrap();
    let g = Generator::homogeneous(a.clone(), 1.0, &ValidationOptions::default()).unwrap();
    let oracle = psi_brute(&a.to_rows(), 0);
    // by hand: [[2, −1, −1], [−1, 1, 0], [−1, 0, 1]]
    assert_eq!(oracle, vec![vec![2.0, -1.0, -1.0], vec![-1.0, 1.0, 0.0], vec![-1.0, 0.0, 1.0]]);
    let p = psi(&g, &0.5, State(0)).unwrap();
    assert_eq!(p.matrix().to_rows(), oracle);
}

#[test]
fn psi_matches_oracle_on_random_generators() {
    for seed in 0..50 {
        let g = random_generator(seed, 6, 2, 3.0, 0.3);
        for s in 0..6 {
            let t = 0.7;
            let p = psi(&g, &t, State(s)).unwrap();
            let o = psi_brute(&g.matrix_at(&t).to_rows(), s);
            for i in 0..6 {
                for j in 0..6 {
                    assert!((p.matrix()[(i, j)] - o[i][j]).abs() < 1e-14);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psi_is_symmetric_psd_with_zero_sums(seed in any::<u64>(), n in 2usize..8, s in 0usize..8, t in 0.0f64..1.0) {
        let s = s % n;
        let g = random_generator(seed, n, 3, 5.0, 0.4);
        let p = psi(&g, &t, State(s)).unwrap();
        let m = p.matrix();
        for i in 0..n {
            let row: f64 = (0..n).map(|j| m[(i, j)]).sum();
            let col: f64 = (0..n).map(|j| m[(j, i)]).sum();
            prop_assert!(row.abs() <= 1e-12 && col.abs() <= 1e-12);
            for j in 0..n {
                prop_assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..1000 {
            let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            prop_assert!(p.quadratic_form(&z) >= -1e-12);
        }
    }

    #[test]
    fn seminorm_ignores_constant_shift(seed in any::<u64>(), n in 2usize..8, c in -100.0f64..100.0) {
        let g = random_generator(seed, n, 2, 4.0, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        for s in 0..n {
            let a = seminorm_sq(&z, &g, &0.3, State(s)).unwrap();
            let b = seminorm_sq(&shifted, &g, &0.3, State(s)).unwrap();
            // absolute floor covers the rounding of (z + c)² at large c
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0) * (1.0 + c * c), "{} vs {}", a, b);
        }
    }

    #[test]
    fn m_equivalence_reflexive_and_symmetric(seed in any::<u64>(), n in 2usize..7) {
        let g = random_generator(seed, n, 1, 2.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut z2 = z1.clone();
        z2[rng.gen_range(0..n)] += rng.gen_range(-1.0..1.0);
        for s in 0..n {
            prop_assert!(m_equivalent(&z1, &z1, &g, &0.0, State(s), &0.0).unwrap());
            let ab = m_equivalent(&z1, &z2, &g, &0.0, State(s), &1e-12).unwrap();
            let ba = m_equivalent(&z2, &z1, &g, &0.0, State(s), &1e-12).unwrap();
            prop_assert_eq!(ab, ba);
        }
    }
}

type Q = Ratio<i64>;

fn q(n: i64) -> Q {
    Ratio::from_integer(n)
}

fn rational_gen(rng: &mut ChaCha8Rng, n: usize) -> Generator<Q> {
    let mut a = SquareMatrix::<Q>::zeros(n);
    for j in 0..n {
        let mut out = q(0);
        for i in 0..n {
            if i != j && rng.gen_bool(0.6) {
                let r = Ratio::new(rng.gen_range(1..7), rng.gen_range(1..4));
                a[(i, j)] = r;
                out += r;
            }
        }
        a[(j, j)] = -out;
    }
    Generator::homogeneous(a, q(1), &ValidationOptions::exact()).unwrap()
}

#[test]
fn m_equivalence_transitive_on_exact_rationals() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let zero = q(0);
    let mut triples_tested = 0;
    for _ in 0..300 {
        let n = rng.gen_range(2..6);
        let g = rational_gen(&mut rng, n);
        let s = State(rng.gen_range(0..n));
        let base: Vec<Q> = (0..n).map(|_| q(rng.gen_range(-5..6))).collect();
        // equivalent moves: constant shifts and unreachable coordinates
        let a = &g.segments()[0].matrix;
        let step = |z: &Vec<Q>, rng: &mut ChaCha8Rng| -> Vec<Q> {
            let mut w: Vec<Q> = z.iter().map(|v| v + q(rng.gen_range(-3..4))).collect();
            if rng.gen_bool(0.5) {
                w = z.clone();
                let c = q(rng.gen_range(-3..4));
                for v in w.iter_mut() {
                    *v += c;
                }
                for j in 0..n {
                    if j != s.0 && a[(j, s.0)] == zero {
                        w[j] = q(rng.gen_range(-9..10));
                    }
                }
            }
            w
        };
        let z1 = base;
        let z2 = step(&z1, &mut rng);
        let z3 = step(&z2, &mut rng);
        let e12 = m_equivalent(&z1, &z2, &g, &zero, s, &zero).unwrap();
        let e23 = m_equivalent(&z2, &z3, &g, &zero, s, &zero).unwrap();
        let e13 = m_equivalent(&z1, &z3, &g, &zero, s, &zero).unwrap();
        if e12 && e23 {
            triples_tested += 1;
            assert!(e13);
        }
        assert!(m_equivalent(&z1, &z1, &g, &zero, s, &zero).unwrap());
        assert_eq!(e12, m_equivalent(&z2, &z1, &g, &zero, s, &zero).unwrap());
    }
    assert!(triples_tested > 30, "{triples_tested}");
}

#[test]
fn exact_psi_has_exact_zero_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let n = rng.gen_range(2..7);
        let g = rational_gen(&mut rng, n);
        for s in 0..n {
            let p = psi(&g, &q(0), State(s)).unwrap();
            for i in 0..n {
                let row = (0..n).fold(q(0), |acc, j| acc + p.matrix()[(i, j)]);
                assert_eq!(row, q(0));
            }
        }
    }
}

/// Chi-square test of the simulated `X_T` law against `exp(T A) e_start`.
#[test]
fn simulated_marginal_matches_matrix_exponential() {
    let a = SquareMatrix::from_rows(vec![
        vec![-1.5, 0.4, 1.0],
        vec![1.0, -0.9, 2.0],
        vec![0.5, 0.5, -3.0],
    ])
    .unwrap();
    let horizon = 0.8;
    let g = Generator::homogeneous(a.clone(), horizon, &ValidationOptions::default()).unwrap();
    let p = expm(&common::scale(&a.to_rows(), horizon));
    // column convention: distribution at T is exp(TA) applied to e_0
    let probs: Vec<f64> = (0..3).map(|i| p[i][0]).collect();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let n_paths = 100_000u64;
    let mut counts = [0u64; 3];
    for seed in 0..n_paths {
        let path = simulate_path(&g, State(0), seed).unwrap();
        counts[path.state_at(horizon).0] += 1;
    }
    let stat: f64 = (0..3)
        .map(|i| {
            let e = probs[i] * n_paths as f64;
            (counts[i] as f64 - e).powi(2) / e
        })
        .sum();
    let p_value = 1.0 - ChiSquared::new(2.0).unwrap().cdf(stat);
    assert!(p_value > 0.001, "chi2 = {stat}, p = {p_value}, counts {counts:?}, probs {probs:?}");
}
