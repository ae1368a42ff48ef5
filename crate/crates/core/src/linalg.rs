//! Small dense symmetric solves for the regression step.

use crate::scalar::{lit, Real};

/// Solves `G c = b` for symmetric positive definite `G` (row-major, `m×m`).
/// Returns `None` when a pivot is not safely positive.
pub(crate) fn cholesky_solve<T: Real>(g: &[T], b: &[T], m: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); m * m];
    let diag_max = (0..m).fold(T::zero(), |acc, i| acc.max(g[i * m + i].abs()));
    let floor = diag_max * lit(1e-12);
    for i in 0..m {
        for j in 0..=i {
            let mut s = g[i * m + j];
            for k in 0..j {
                s = s - l[i * m + k] * l[j * m + k];
            }
            if i == j {
                if !(s > floor) {
                    return None;
                }
                l[i * m + i] = s.sqrt();
            } else {
                l[i * m + j] = s / l[j * m + j];
            }
        }
    }
    let mut y = vec![T::zero(); m];
    for i in 0..m {
        let s = (0..i).fold(b[i], |acc, k| acc - l[i * m + k] * y[k]);
        y[i] = s / l[i * m + i];
    }
    let mut x = vec![T::zero(); m];
    for i in (0..m).rev() {
        let s = (i + 1..m).fold(y[i], |acc, k| acc - l[k * m + i] * x[k]);
        x[i] = s / l[i * m + i];
    }
    Some(x)
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
/// Returns eigenvalues and the row-major eigenvector matrix (columns are vectors).
fn jacobi_eigen<T: Real>(g: &[T], m: usize) -> (Vec<T>, Vec<T>) {
    let mut a = g.to_vec();
    let mut v = vec![T::zero(); m * m];
    for i in 0..m {
        v[i * m + i] = T::one();
    }
    let two = lit::<T>(2.0);
    for _sweep in 0..100 {
        let off: T = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * m + j] * a[i * m + j])
            .sum();
        let total: T = a.iter().map(|&x| x * x).sum();
        if off <= total * lit(1e-30) {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[p * m + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q * m + q] - a[p * m + p]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
                for k in 0..m {
                    let vkp = v[k * m + p];
                    let vkq = v[k * m + q];
                    v[k * m + p] = c * vkp - s * vkq;
                    v[k * m + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..m).map(|i| a[i * m + i]).collect(), v)
}

/// Minimum-norm least-squares solution `G⁺ b` for symmetric PSD `G`.
pub(crate) fn pinv_solve<T: Real>(g: &[T], b: &[T], m: usize) -> Vec<T> {
    let (eig, v) = jacobi_eigen(g, m);
    let max_eig = eig.iter().fold(T::zero(), |acc, &e| acc.max(e.abs()));
    let cutoff = max_eig * lit(1e-12);
    let mut x = vec![T::zero(); m];
    for k in 0..m {
        if eig[k] <= cutoff {
            continue;
        }
        let proj = (0..m).fold(T::zero(), |acc, i| acc + v[i * m + k] * b[i]) / eig[k];
        for i in 0..m {
            x[i] = x[i] + proj * v[i * m + k];
        }
    }
    x
}
