use log::warn;
use rayon::prelude::*;
use serde_json::json;

use super::linalg::symmetric_eigen;
use super::{Embedding, EmbeddingMeta, EmbeddingMethod};
use crate::error::{Error, Result};
use crate::matrix::{ExpressionMatrix, Layer};
use crate::rng::{Domain, Stream};

const GENE_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaOptions {
    pub n_components: usize,
    /// Scale genes to unit variance after centering.
    pub scale: bool,
    /// Extra block columns beyond `n_components`.
    pub oversample: usize,
    /// Krylov powers per restart; 0 gives plain subspace iteration.
    pub krylov_depth: usize,
    /// Ritz residual tolerance relative to the top eigenvalue.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl PcaOptions {
    pub fn new(n_components: usize) -> Self {
        PcaOptions {
            n_components,
            scale: false,
            oversample: 10,
            krylov_depth: 4,
            tol: 1e-12,
            max_iter: 500,
            seed: 0,
        }
    }
}

/// Projection plus the quantities needed to audit it.
#[derive(Debug, Clone)]
pub struct Pca {
    pub embedding: Embedding,
    /// Genes × components, row-major; each column has unit norm.
    pub loadings: Vec<f64>,
    /// Sum of per-gene variances of the (scaled) centered matrix.
    pub total_variance: f64,
    pub iterations: usize,
}

/// Top `n_components` principal components of a normalized matrix with
/// default options.
pub fn pca(m: &ExpressionMatrix, n_components: usize) -> Result<Embedding> {
    pca_with(m, &PcaOptions::new(n_components)).map(|p| p.embedding)
}

/// The centered (optionally scaled) cells × genes operator, applied without
/// materializing it so sparse input stays sparse.
struct Centered<'a> {
    m: &'a ExpressionMatrix,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Centered<'_> {
    fn n_cells(&self) -> usize {
        self.m.n_cells()
    }

    fn n_genes(&self) -> usize {
        self.m.n_genes()
    }

    /// `A · v` for `v` genes × b. Genes are split into fixed chunks whose
    /// partial sums are added in chunk order, so the result does not depend
    /// on the thread count.
    fn apply(&self, v: &[f64], b: usize) -> Vec<f64> {
        let (n, p) = (self.n_cells(), self.n_genes());
        let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..p.div_ceil(GENE_CHUNK))
            .into_par_iter()
            .map(|chunk| {
                let mut out = vec![0.0; n * b];
                let mut shift = vec![0.0; b];
                for g in chunk * GENE_CHUNK..((chunk + 1) * GENE_CHUNK).min(p) {
                    let s = self.scale[g];
                    let row = &v[g * b..(g + 1) * b];
                    self.m.for_each_nonzero(g, |c, x| {
                        let w = x * s;
                        for (o, r) in out[c * b..(c + 1) * b].iter_mut().zip(row) {
                            *o += w * r;
                        }
                    });
                    for (sh, r) in shift.iter_mut().zip(row) {
                        *sh += self.mean[g] * s * r;
                    }
                }
                (out, shift)
            })
            .collect();
        let mut out = vec![0.0; n * b];
        let mut shift = vec![0.0; b];
        for (o, sh) in partials {
            out.iter_mut().zip(&o).for_each(|(a, x)| *a += x);
            shift.iter_mut().zip(&sh).for_each(|(a, x)| *a += x);
        }
        for c in 0..n {
            for j in 0..b {
                out[c * b + j] -= shift[j];
            }
        }
        out
    }

    /// `Aᵀ · u` for `u` cells × b.
    fn apply_t(&self, u: &[f64], b: usize) -> Vec<f64> {
        let (n, p) = (self.n_cells(), self.n_genes());
        let mut colsum = vec![0.0; b];
        for c in 0..n {
            for j in 0..b {
                colsum[j] += u[c * b + j];
            }
        }
        let mut out = vec![0.0; p * b];
        out.par_chunks_mut(b).enumerate().for_each(|(g, row)| {
            let s = self.scale[g];
            self.m.for_each_nonzero(g, |c, x| {
                for (r, y) in row.iter_mut().zip(&u[c * b..(c + 1) * b]) {
                    *r += x * y;
                }
            });
            for j in 0..b {
                row[j] = s * (row[j] - self.mean[g] * colsum[j]);
            }
        });
        out
    }

    /// Apply the Gram operator on the smaller side.
    fn gram(&self, q: &[f64], b: usize, gene_side: bool) -> Vec<f64> {
        if gene_side {
            self.apply_t(&self.apply(q, b), b)
        } else {
            self.apply(&self.apply_t(q, b), b)
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthogonalize `v` against `basis` (two Gram-Schmidt passes) and append it
/// normalized, unless it lies in the span already.
fn push_orthonormal(basis: &mut Vec<Vec<f64>>, mut v: Vec<f64>) {
    let before = dot(&v, &v).sqrt();
    if before == 0.0 {
        return;
    }
    for _ in 0..2 {
        for q in basis.iter() {
            let d = dot(q, &v);
            for (x, y) in v.iter_mut().zip(q) {
                *x -= d * y;
            }
        }
    }
    let after = dot(&v, &v).sqrt();
    if after > 1e-10 * before {
        v.iter_mut().for_each(|x| *x /= after);
        basis.push(v);
    }
}

/// Column vectors to a row-major `rows × cols.len()` block.
fn to_rows(cols: &[Vec<f64>], rows: usize) -> Vec<f64> {
    let b = cols.len();
    let mut out = vec![0.0; rows * b];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..rows {
            out[i * b + j] = c[i];
        }
    }
    out
}

fn to_columns(block: &[f64], rows: usize, b: usize) -> Vec<Vec<f64>> {
    (0..b).map(|j| (0..rows).map(|i| block[i * b + j]).collect()).collect()
}

/// PCA by restarted block Krylov iteration with Rayleigh-Ritz extraction on
/// the smaller Gram matrix (`AᵀA` when genes ≤ cells, else `AAᵀ`).
///
/// Each restart builds `[S, MS, …, M^depth S]` from the current block `S` of
/// Ritz vectors. Iteration stops once every wanted Ritz pair has residual
/// `‖Mv − θv‖ ≤ tol · θ_max`. Components are ordered by decreasing singular
/// value and each loading vector's largest-magnitude entry is made positive.
pub fn pca_with(m: &ExpressionMatrix, opts: &PcaOptions) -> Result<Pca> {
    if m.layer() != Layer::Normalized {
        return Err(Error::WrongLayer {
            expected: "normalized",
            found: m.layer().as_str(),
        });
    }
    let (n, p) = (m.n_cells(), m.n_genes());
    let k = opts.n_components;
    let side = n.min(p);
    if k == 0 || k > side {
        return Err(Error::InvalidArgument(format!(
            "n_components must be in 1..={side}, got {k}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("PCA needs at least 2 cells".into()));
    }

    let mut mean = vec![0.0; p];
    let mut var = vec![0.0; p];
    for g in 0..p {
        let mut sum = 0.0;
        let mut nnz = 0;
        m.for_each_nonzero(g, |_, x| {
            sum += x;
            nnz += 1;
        });
        let mu = sum / n as f64;
        let mut ss = (n - nnz) as f64 * mu * mu;
        m.for_each_nonzero(g, |_, x| ss += (x - mu) * (x - mu));
        mean[g] = mu;
        var[g] = ss / (n as f64 - 1.0);
    }
    let scale: Vec<f64> = if opts.scale {
        var.iter()
            .map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 })
            .collect()
    } else {
        vec![1.0; p]
    };
    let total_variance: f64 = var.iter().zip(&scale).map(|(v, s)| v * s * s).sum();
    if !(total_variance > 0.0) {
        return Err(Error::Degenerate("every gene is constant across cells".into()));
    }

    let op = Centered { m, mean, scale };
    let gene_side = p <= n;
    let b = (k + opts.oversample).min(side);

    let mut rng = Stream::new(opts.seed, Domain::PcaStart, 0);
    let mut start: Vec<Vec<f64>> = (0..b)
        .map(|_| (0..side).map(|_| rng.uniform() - 0.5).collect())
        .collect();

    let mut iterations = 0;
    let (theta, ritz) = loop {
        iterations += 1;
        // Block Krylov basis [S, MS, M²S, ...] and its image under M.
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut images: Vec<Vec<f64>> = Vec::new();
        for v in start {
            push_orthonormal(&mut basis, v);
        }
        let mut lo = 0;
        for level in 0..=opts.krylov_depth {
            let hi = basis.len();
            if lo == hi {
                break;
            }
            let z = op.gram(&to_rows(&basis[lo..hi], side), hi - lo, gene_side);
            let z = to_columns(&z, side, hi - lo);
            images.extend(z.iter().cloned());
            if level < opts.krylov_depth {
                for v in z {
                    if basis.len() == side {
                        break;
                    }
                    push_orthonormal(&mut basis, v);
                }
            }
            lo = hi;
        }
        let dim = basis.len();
        let mut t = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let avg = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
                t[i * dim + j] = avg;
                t[j * dim + i] = avg;
            }
        }
        let (theta, w) = symmetric_eigen(&t, dim);
        let keep = b.min(dim);
        let combine = |cols: &[Vec<f64>], j: usize| {
            let mut out = vec![0.0; side];
            for (i, c) in cols.iter().enumerate() {
                let wij = w[i * dim + j];
                for (o, x) in out.iter_mut().zip(c) {
                    *o += wij * x;
                }
            }
            out
        };
        let v: Vec<Vec<f64>> = (0..keep).map(|j| combine(&basis, j)).collect();

        let top = theta[0].abs().max(f64::MIN_POSITIVE);
        let converged = (0..k).all(|j| {
            let mv = combine(&images, j);
            let r = mv
                .iter()
                .zip(&v[j])
                .map(|(a, b)| (a - theta[j] * b).powi(2))
                .sum::<f64>()
                .sqrt();
            r <= opts.tol * top
        });
        if converged || dim == side || iterations >= opts.max_iter {
            if !converged && dim < side {
                warn!(
                    "PCA stopped after {iterations} restarts without reaching tolerance {}",
                    opts.tol
                );
            }
            break (theta, to_rows(&v[..k], side));
        }
        start = v;
    };

    // Loadings (genes × k) and singular values.
    let sigma: Vec<f64> = theta[..k].iter().map(|&t| t.max(0.0).sqrt()).collect();
    let mut loadings = vec![0.0; p * k];
    if gene_side {
        for g in 0..p {
            loadings[g * k..(g + 1) * k].copy_from_slice(&ritz[g * k..(g + 1) * k]);
        }
    } else {
        let mut u = vec![0.0; n * k];
        for c in 0..n {
            u[c * k..(c + 1) * k].copy_from_slice(&ritz[c * k..(c + 1) * k]);
        }
        let atu = op.apply_t(&u, k);
        for j in 0..k {
            let norm = (0..p).map(|g| atu[g * k + j] * atu[g * k + j]).sum::<f64>().sqrt();
            if sigma[j] > 1e-12 * sigma[0] && norm > 0.0 {
                for g in 0..p {
                    loadings[g * k + j] = atu[g * k + j] / norm;
                }
            }
        }
    }
    for j in 0..k {
        let mut best = 0;
        for g in 1..p {
            if loadings[g * k + j].abs() > loadings[best * k + j].abs() {
                best = g;
            }
        }
        if loadings[best * k + j] < 0.0 {
            for g in 0..p {
                loadings[g * k + j] = -loadings[g * k + j];
            }
        }
    }

    let coords = op.apply(&loadings, k);
    let explained: Vec<f64> = sigma.iter().map(|s| s * s / (n as f64 - 1.0)).collect();
    // Ritz values are sorted; clamp rounding-level inversions.
    let mut explained_variance = explained;
    for j in 1..k {
        if explained_variance[j] > explained_variance[j - 1] {
            explained_variance[j] = explained_variance[j - 1];
        }
    }

    let meta = EmbeddingMeta {
        method: EmbeddingMethod::Pca,
        dim: k,
        explained_variance: Some(explained_variance),
        source_hash: m.content_hash(),
        params: json!({
            "n_components": k,
            "scale": opts.scale,
            "centered": true,
            "algorithm": "restarted block Krylov + Rayleigh-Ritz",
            "oversample": opts.oversample,
            "krylov_depth": opts.krylov_depth,
            "tol": opts.tol,
            "iterations": iterations,
            "seed": opts.seed,
            "total_variance": total_variance,
        }),
    };
    Ok(Pca {
        embedding: Embedding::new(m.cell_ids().to_vec(), coords, meta)?,
        loadings,
        total_variance,
        iterations,
    })
}
