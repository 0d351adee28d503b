//! Small dense kernels: symmetric eigensolver and column orthonormalization.
//!
//! Matrices are row-major `Vec<f64>` with explicit dimensions.

use crate::rng::Stream;

/// Eigen-decomposition of a symmetric `n × n` matrix by cyclic Jacobi
/// rotations. Returns eigenvalues in descending order and the matching
/// eigenvectors as columns of a row-major `n × n` matrix.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..n {
            diag += m[i * n + i] * m[i * n + i];
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off <= 1e-30 * diag || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors[k * n + new] = v[k * n + old];
        }
    }
    (values, vectors)
}

/// Orthonormalize the columns of a row-major `rows × cols` matrix in place
/// by modified Gram-Schmidt with one re-orthogonalization pass. Columns that
/// collapse (linearly dependent input) are replaced by random directions.
pub fn orthonormalize_columns(q: &mut [f64], rows: usize, cols: usize, rng: &mut Stream) {
    assert!(cols <= rows);
    for j in 0..cols {
        let mut attempts = 0;
        loop {
            let before = column_norm(q, rows, cols, j);
            for _pass in 0..2 {
                for i in 0..j {
                    let dot: f64 = (0..rows).map(|r| q[r * cols + i] * q[r * cols + j]).sum();
                    for r in 0..rows {
                        q[r * cols + j] -= dot * q[r * cols + i];
                    }
                }
            }
            let norm = column_norm(q, rows, cols, j);
            if norm > 1e-10 * before.max(f64::MIN_POSITIVE) && norm > 1e-300 {
                for r in 0..rows {
                    q[r * cols + j] /= norm;
                }
                break;
            }
            attempts += 1;
            assert!(attempts < 100, "could not complete orthonormal basis");
            for r in 0..rows {
                q[r * cols + j] = rng.uniform() - 0.5;
            }
        }
    }
}

fn column_norm(q: &[f64], rows: usize, cols: usize, j: usize) -> f64 {
    (0..rows).map(|r| q[r * cols + j] * q[r * cols + j]).sum::<f64>().sqrt()
}

/// `a (m × k) · b (k × n)`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for l in 0..k {
            let x = a[i * k + l];
            if x == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += x * b[l * n + j];
            }
        }
    }
    out
}

/// `aᵀ (k × m) · b (m × n)` for row-major `a` of shape `m × k`.
pub fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for r in 0..m {
        for i in 0..k {
            let x = a[r * k + i];
            if x == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += x * b[r * n + j];
            }
        }
    }
    out
}
