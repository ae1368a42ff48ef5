//! Test-only oracles, independent of the library's solution paths.
#![allow(dead_code)]

use chainbsde::{validate_generator, Generator, SquareMatrix, ValidationOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

pub fn transpose(a: &Dense) -> Dense {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| a[j][i]).collect()).collect()
}

pub fn matvec(a: &Dense, v: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// `exp(M)` by scaling and squaring with a 30-term Taylor series.
pub fn expm(m: &Dense) -> Dense {
    let n = m.len();
    let norm = m
        .iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.5 {
        s += 1;
    }
    let scaled: Dense = m
        .iter()
        .map(|r| r.iter().map(|x| x / 2f64.powi(s)).collect())
        .collect();
    let mut result: Dense = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut term = result.clone();
    for k in 1..30 {
        term = matmul(&term, &scaled);
        for r in term.iter_mut() {
            for x in r.iter_mut() {
                *x /= k as f64;
            }
        }
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        result = matmul(&result, &result);
    }
    result
}

pub fn scale(a: &Dense, c: f64) -> Dense {
    a.iter().map(|r| r.iter().map(|x| x * c).collect()).collect()
}

/// Zero-driver solution at time `t`: apply `exp((b − t) Aᵀ)` segment by
/// segment from the horizon down.
pub fn linear_backward(gen: &Generator<f64>, terminal: &[f64], t: f64) -> Vec<f64> {
    let mut u = terminal.to_vec();
    let segs = gen.segments();
    for k in (0..segs.len()).rev() {
        let start = segs[k].start;
        let end = *gen.segment_end(k);
        if end <= t {
            break;
        }
        let lo = start.max(t);
        let at = transpose(&segs[k].matrix.to_rows());
        u = matvec(&expm(&scale(&at, end - lo)), &u);
    }
    u
}

/// Random column-convention generator: off-diagonals in `[0, max_rate)`,
/// each zeroed with probability `sparsity`.
pub fn random_rate_matrix(rng: &mut impl Rng, n: usize, max_rate: f64, sparsity: f64) -> SquareMatrix<f64> {
    let mut a = SquareMatrix::zeros(n);
    for j in 0..n {
        let mut out = 0.0;
        for i in 0..n {
            if i != j && rng.gen::<f64>() >= sparsity {
                let r = rng.gen::<f64>() * max_rate;
                a[(i, j)] = r;
                out += r;
            }
        }
        a[(j, j)] = -out;
    }
    a
}

pub fn random_generator(seed: u64, n: usize, segments: usize, max_rate: f64, sparsity: f64) -> Generator<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<f64> = (1..segments).map(|_| rng.gen_range(0.05..0.95)).collect();
    starts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    starts.dedup();
    starts.insert(0, 0.0);
    let raw = starts
        .into_iter()
        .map(|s| (s, random_rate_matrix(&mut rng, n, max_rate, sparsity)))
        .collect();
    validate_generator(raw, 1.0, &ValidationOptions::default()).unwrap()
}

/// Ψ evaluated by literally forming `diag(AX) − A·diag(X) − diag(X)·Aᵀ`.
pub fn psi_brute(a: &Dense, state: usize) -> Dense {
    let n = a.len();
    let x: Vec<f64> = (0..n).map(|i| if i == state { 1.0 } else { 0.0 }).collect();
    let ax = matvec(a, &x);
    let diag = |v: &[f64]| -> Dense {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { v[i] } else { 0.0 }).collect())
            .collect()
    };
    let d_ax = diag(&ax);
    let d_x = diag(&x);
    let left = matmul(a, &d_x);
    let right = matmul(&d_x, &transpose(a));
    (0..n)
        .map(|i| (0..n).map(|j| d_ax[i][j] - left[i][j] - right[i][j]).collect())
        .collect()
}
