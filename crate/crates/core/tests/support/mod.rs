//! Shared test oracles, independent of the library's numeric paths.

#![allow(dead_code)]

use lmirnn_core::numkit::{Matrix, SymmetricMatrix};

/// All eigenvalues of a symmetric matrix by the cyclic Jacobi rotation
/// method. Brute force and independent of the Cholesky-based machinery
/// under test.
pub fn sym_eigenvalues(m: &SymmetricMatrix<f64>) -> Vec<f64> {
    let n = m.dim();
    let mut a = m.to_full();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a.get(i, j) * a.get(i, j);
                }
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                // standard Jacobi angle
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // rotate rows/cols p and q
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// Largest eigenvalue of a symmetric matrix by power iteration on the
/// shifted matrix A + cI (c makes the spectrum positive so the dominant
/// eigenvalue is lambda_max + c).
pub fn largest_eigenvalue_power(m: &SymmetricMatrix<f64>) -> f64 {
    let n = m.dim();
    let full = m.to_full();
    let shift = 1.0
        + (0..n)
            .map(|i| full.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
    let shifted = Matrix::from_fn(n, n, |i, j| full.get(i, j) + if i == j { shift } else { 0.0 });
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) * 0.3).collect();
    let mut lambda = 0.0;
    for _ in 0..200_000 {
        let w = shifted.mul_vec(&v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return -shift; // zero matrix after shift cannot happen (shift >= 1)
        }
        let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
        let new_lambda: f64 = next
            .iter()
            .zip(shifted.mul_vec(&next))
            .map(|(a, b)| a * b)
            .sum();
        let done = (new_lambda - lambda).abs() <= 1e-14 * new_lambda.abs().max(1.0);
        lambda = new_lambda;
        v = next;
        if done {
            break;
        }
    }
    lambda - shift
}

/// Relative-error comparison with an absolute floor for near-zero values.
pub fn grad_close(analytic: f64, numeric: f64, rel_tol: f64, abs_floor: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= rel_tol * analytic.abs().max(numeric.abs()) || diff <= abs_floor
}

/// Central-difference gradient of `f` at `x`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let hi = f(&xp);
        xp[i] = orig - h;
        let lo = f(&xp);
        xp[i] = orig;
        grad.push((hi - lo) / (2.0 * h));
    }
    grad
}
