//! Exact (O(n²)) t-distributed stochastic neighbor embedding in two
//! dimensions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Embedding, EmbeddingMeta, EmbeddingMethod};
use crate::error::{Error, Result};
use crate::rng::{Domain, Stream};
use crate::sampling::standard_normal;

const OUT_DIM: usize = 2;
const MIN_GAIN: f64 = 0.01;
const KL_TRACE_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub n_iter: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum_early: f64,
    pub momentum_late: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            n_iter: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_early: 0.5,
            momentum_late: 0.8,
            seed: 0,
        }
    }
}

impl TsneConfig {
    fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.perplexity > 1.0) {
            return bad(format!("perplexity must exceed 1, got {}", self.perplexity));
        }
        if self.perplexity >= n as f64 - 1.0 {
            return bad(format!(
                "perplexity {} must be below n - 1 = {}",
                self.perplexity,
                n as f64 - 1.0
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.early_exaggeration >= 1.0) {
            return bad("learning rate must be positive and exaggeration at least 1".into());
        }
        for m in [self.momentum_early, self.momentum_late] {
            if !(0.0..1.0).contains(&m) {
                return bad(format!("momentum {m} outside [0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TsneResult {
    pub embedding: Embedding,
    /// `(iteration, KL(P‖Q))`, always against the un-exaggerated P.
    pub kl_trace: Vec<(usize, f64)>,
    pub final_kl: f64,
}

/// Row-major `n × n` squared Euclidean distances between `dim`-dimensional
/// points.
pub fn squared_distances(points: &[f64], n: usize, dim: usize) -> Vec<f64> {
    assert_eq!(points.len(), n * dim);
    let mut d = vec![0.0; n * n];
    d.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let pi = &points[i * dim..(i + 1) * dim];
        for (j, out) in row.iter_mut().enumerate() {
            if j != i {
                let pj = &points[j * dim..(j + 1) * dim];
                *out = pi.iter().zip(pj).map(|(a, b)| (a - b) * (a - b)).sum();
            }
        }
    });
    d
}

/// Conditional probabilities `P(j|i)` (row-major, rows sum to 1, zero
/// diagonal) with per-row Gaussian precision chosen so that each row's
/// perplexity `exp(H)` matches `perplexity`.
///
/// The precision is bracketed by doubling/halving and then refined by up to
/// 50 bisection steps in log space, stopping once the perplexity is within
/// 1e-5 of the target.
pub fn perplexity_calibration(distances_sq: &[f64], n: usize, perplexity: f64) -> Result<Vec<f64>> {
    assert_eq!(distances_sq.len(), n * n);
    if !(perplexity > 1.0) || perplexity >= n as f64 - 1.0 {
        return Err(Error::InvalidArgument(format!(
            "perplexity {perplexity} must lie in (1, n - 1) with n = {n}"
        )));
    }
    let mut p = vec![0.0; n * n];
    p.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        calibrate_row(&distances_sq[i * n..(i + 1) * n], i, perplexity, row);
    });
    Ok(p)
}

/// Fills `row` with P(·|i) at precision `beta`; returns the perplexity.
fn row_at_beta(d: &[f64], i: usize, dmin: f64, beta: f64, row: &mut [f64]) -> f64 {
    let mut z = 0.0;
    for (j, out) in row.iter_mut().enumerate() {
        *out = if j == i { 0.0 } else { (-(d[j] - dmin) * beta).exp() };
        z += *out;
    }
    let mut weighted = 0.0;
    for (j, out) in row.iter_mut().enumerate() {
        *out /= z;
        if j != i {
            weighted += *out * (d[j] - dmin);
        }
    }
    // H = ln Z + beta * E[d - dmin]
    (z.ln() + beta * weighted).exp()
}

fn calibrate_row(d: &[f64], i: usize, target: f64, row: &mut [f64]) {
    const TOL: f64 = 1e-5;
    let dmin = d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &x)| x)
        .fold(f64::INFINITY, f64::min);
    if d.iter().enumerate().all(|(j, &x)| j == i || x == dmin) {
        // every precision gives the uniform distribution
        row_at_beta(d, i, dmin, 1.0, row);
        return;
    }

    // perplexity decreases as beta grows
    let mut beta = 1.0;
    let mut perp = row_at_beta(d, i, dmin, beta, row);
    if (perp - target).abs() <= TOL {
        return;
    }
    let (mut lo, mut hi);
    if perp > target {
        lo = beta;
        loop {
            beta *= 2.0;
            perp = row_at_beta(d, i, dmin, beta, row);
            if perp <= target || !beta.is_finite() || beta > 1e300 {
                hi = beta;
                break;
            }
            lo = beta;
        }
    } else {
        hi = beta;
        loop {
            beta *= 0.5;
            perp = row_at_beta(d, i, dmin, beta, row);
            if perp >= target || beta < 1e-300 {
                lo = beta;
                break;
            }
            hi = beta;
        }
    }
    if (perp - target).abs() <= TOL {
        return;
    }
    for _ in 0..50 {
        beta = (0.5 * (lo.ln() + hi.ln())).exp();
        perp = row_at_beta(d, i, dmin, beta, row);
        if (perp - target).abs() <= TOL {
            return;
        }
        if perp > target {
            lo = beta;
        } else {
            hi = beta;
        }
    }
}

/// Symmetrized joint probabilities `(P(j|i) + P(i|j)) / 2n`.
pub fn joint_probabilities(conditional: &[f64], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (conditional[i * n + j] + conditional[j * n + i]) / denom;
        }
    }
    p
}

/// Student-t kernel rows `1 / (1 + ‖y_i − y_j‖²)` with zero diagonal, and
/// their total. The total is accumulated row by row in index order so it is
/// independent of the thread count.
fn kernel(y: &[f64], n: usize) -> (Vec<f64>, f64) {
    let mut w = vec![0.0; n * n];
    w.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let (yi0, yi1) = (y[2 * i], y[2 * i + 1]);
        for (j, out) in row.iter_mut().enumerate() {
            if j != i {
                let (a, b) = (yi0 - y[2 * j], yi1 - y[2 * j + 1]);
                *out = 1.0 / (1.0 + a * a + b * b);
            }
        }
    });
    let row_sums: Vec<f64> = w.par_chunks(n).map(|r| r.iter().sum::<f64>()).collect();
    let z = row_sums.iter().sum();
    (w, z)
}

/// KL(P‖Q) for a 2-D layout `y` (row-major n × 2).
pub fn kl_divergence(p: &[f64], y: &[f64], n: usize) -> f64 {
    let (w, z) = kernel(y, n);
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                let pij = p[i * n + j];
                if j != i && pij > 0.0 {
                    s += pij * (pij / (w[i * n + j] / z)).ln();
                }
            }
            s
        })
        .collect();
    rows.iter().sum()
}

/// Gradient of KL(P‖Q) with respect to `y`:
/// `4 Σ_j (p_ij − q_ij)(y_i − y_j) / (1 + ‖y_i − y_j‖²)`.
pub fn kl_gradient(p: &[f64], y: &[f64], n: usize) -> Vec<f64> {
    gradient_scaled(p, 1.0, y, n)
}

fn gradient_scaled(p: &[f64], exaggeration: f64, y: &[f64], n: usize) -> Vec<f64> {
    let (w, z) = kernel(y, n);
    let mut grad = vec![0.0; 2 * n];
    grad.par_chunks_mut(2).enumerate().for_each(|(i, g)| {
        let (mut g0, mut g1) = (0.0, 0.0);
        for j in 0..n {
            if j == i {
                continue;
            }
            let wij = w[i * n + j];
            let mult = (exaggeration * p[i * n + j] - wij / z) * wij;
            g0 += mult * (y[2 * i] - y[2 * j]);
            g1 += mult * (y[2 * i + 1] - y[2 * j + 1]);
        }
        g[0] = 4.0 * g0;
        g[1] = 4.0 * g1;
    });
    grad
}

/// Embed points in two dimensions by gradient descent on KL(P‖Q) with
/// momentum, per-coordinate adaptive gains and early exaggeration.
pub fn tsne(points: &Embedding, cfg: &TsneConfig) -> Result<TsneResult> {
    let n = points.n_points();
    if n < 4 {
        return Err(Error::InvalidArgument(format!("tSNE needs at least 4 points, got {n}")));
    }
    cfg.validate(n)?;

    let d = squared_distances(points.coords(), n, points.dim());
    let cond = perplexity_calibration(&d, n, cfg.perplexity)?;
    let p = joint_probabilities(&cond, n);

    let mut rng = Stream::new(cfg.seed, Domain::TsneInit, 0);
    let mut y: Vec<f64> = (0..OUT_DIM * n).map(|_| 1e-4 * standard_normal(&mut rng)).collect();
    let mut update = vec![0.0; OUT_DIM * n];
    let mut gains = vec![1.0_f64; OUT_DIM * n];
    let mut kl_trace = Vec::new();

    for iter in 0..cfg.n_iter {
        let early = iter < cfg.exaggeration_iters;
        let exaggeration = if early { cfg.early_exaggeration } else { 1.0 };
        let momentum = if early { cfg.momentum_early } else { cfg.momentum_late };
        let grad = gradient_scaled(&p, exaggeration, &y, n);

        for k in 0..OUT_DIM * n {
            gains[k] = if (grad[k] > 0.0) != (update[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(MIN_GAIN)
            };
            update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }
        for axis in 0..OUT_DIM {
            let mean = (0..n).map(|i| y[OUT_DIM * i + axis]).sum::<f64>() / n as f64;
            for i in 0..n {
                y[OUT_DIM * i + axis] -= mean;
            }
        }
        if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                iteration: iter,
                detail: format!(
                    "non-finite coordinate for point {} (learning rate {})",
                    bad / OUT_DIM,
                    cfg.learning_rate
                ),
            });
        }
        if (iter + 1) % KL_TRACE_EVERY == 0 || iter + 1 == cfg.n_iter {
            kl_trace.push((iter + 1, kl_divergence(&p, &y, n)));
        }
    }
    let final_kl = match kl_trace.last() {
        Some(&(_, kl)) => kl,
        None => kl_divergence(&p, &y, n),
    };

    let meta = EmbeddingMeta {
        method: EmbeddingMethod::Tsne,
        dim: OUT_DIM,
        explained_variance: None,
        source_hash: points.meta.source_hash.clone(),
        params: json!({
            "config": cfg,
            "input_dim": points.dim(),
            "input_method": points.meta.method,
            "affinities": "exact",
            "min_gain": MIN_GAIN,
            "kl_trace": kl_trace,
            "final_kl": final_kl,
        }),
    };
    Ok(TsneResult {
        embedding: Embedding::new(points.cell_ids().to_vec(), y, meta)?,
        kl_trace,
        final_kl,
    })
}
