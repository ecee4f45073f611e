//! Small dense linear algebra used for diagnostics and spectral checks.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::dense::Matrix;
use crate::tape::TensorError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigenError {
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
    #[error("QL iteration did not converge for eigenvalue {0}")]
    NoConvergence(usize),
}

/// Eigenvalues of a symmetric matrix, ascending.
///
/// Householder reduction to tridiagonal form followed by implicit QL with
/// Wilkinson shifts. Only the lower triangle is read.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>, EigenError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(EigenError::NotSquare(a.rows(), a.cols()));
    }
    let (mut d, mut e) = tridiagonalize(a);
    tridiagonal_ql(&mut d, &mut e)?;
    d.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    Ok(d)
}

/// Returns the diagonal and the sub-diagonal (`e[i]` couples `i` and `i+1`,
/// last entry zero).
fn tridiagonalize(a: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.rows();
    // Full symmetric working copy from the lower triangle.
    let mut w = Matrix::from_fn(n, n, |i, j| if i >= j { a.get(i, j) } else { a.get(j, i) });
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];

    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1;
        let col: Vec<f64> = (k + 1..n).map(|i| w.get(i, k)).collect();
        let norm = libm::sqrt(col.iter().map(|x| x * x).sum());
        d[k] = w.get(k, k);
        if norm == 0.0 {
            e[k] = 0.0;
            continue;
        }
        let alpha = if col[0] > 0.0 { -norm } else { norm };
        e[k] = alpha;
        v[..m].copy_from_slice(&col);
        v[0] -= alpha;
        let vnorm = libm::sqrt(v[..m].iter().map(|x| x * x).sum());
        if vnorm == 0.0 {
            continue;
        }
        v[..m].iter_mut().for_each(|x| *x /= vnorm);

        // p = S v, S the trailing block
        for i in 0..m {
            let row = &w.row(k + 1 + i)[k + 1..];
            p[i] = row.iter().zip(&v[..m]).map(|(s, x)| s * x).sum();
        }
        let kappa: f64 = p[..m].iter().zip(&v[..m]).map(|(a, b)| a * b).sum();
        for i in 0..m {
            p[i] -= kappa * v[i];
        }
        // S <- S - 2 (v qᵀ + q vᵀ)
        for i in 0..m {
            let (vi, qi) = (v[i], p[i]);
            let row = &mut w.row_mut(k + 1 + i)[k + 1..];
            for j in 0..m {
                row[j] -= 2.0 * (vi * p[j] + qi * v[j]);
            }
        }
    }
    if n >= 2 {
        d[n - 2] = w.get(n - 2, n - 2);
        e[n - 2] = w.get(n - 1, n - 2);
    }
    if n >= 1 {
        d[n - 1] = w.get(n - 1, n - 1);
        e[n - 1] = 0.0;
    }
    (d, e)
}

fn tridiagonal_ql(d: &mut [f64], e: &mut [f64]) -> Result<(), EigenError> {
    let n = d.len();
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > 200 {
                return Err(EigenError::NoConvergence(l));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = libm::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + libm::copysign(r, g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = libm::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Largest singular value of `w` by power iteration on `wᵀw`.
///
/// Stops once the Rayleigh quotient changes by less than `tol` relative;
/// gives up after 10,000 iterations.
pub fn max_singular_value(w: &Matrix, tol: f64) -> Result<f64, TensorError> {
    const MAX_ITERATIONS: usize = 10_000;
    if w.as_slice().iter().all(|&v| v == 0.0) {
        return Err(TensorError::ZeroMatrix);
    }
    let n = w.cols();
    // Irregular start so it is unlikely to be orthogonal to the top vector.
    let mut x = Matrix::from_fn(n, 1, |i, _| 1.0 + 0.5 * libm::sin(1.0 + 2.3 * i as f64));
    normalize(&mut x);
    let mut previous = 0.0;
    for _ in 0..MAX_ITERATIONS {
        let wx = w.matmul(&x);
        let mut y = Matrix::zeros(n, 1);
        crate::dense::gemm(1.0, w, true, &wx, false, 0.0, &mut y);
        let estimate: f64 = x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum();
        if normalize(&mut y) == 0.0 {
            // x fell into the null space; the estimate from this step stands.
            return Ok(libm::sqrt(estimate.max(0.0)));
        }
        x = y;
        if (estimate - previous).abs() <= tol * estimate.abs() {
            return Ok(libm::sqrt(estimate));
        }
        previous = estimate;
    }
    Err(TensorError::NoConvergence {
        iterations: MAX_ITERATIONS,
    })
}

fn normalize(x: &mut Matrix) -> f64 {
    let norm = libm::sqrt(x.as_slice().iter().map(|v| v * v).sum());
    if norm > 0.0 {
        x.scale_in_place(1.0 / norm);
    }
    norm
}
