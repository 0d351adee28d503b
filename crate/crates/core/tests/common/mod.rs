//! Independent reference implementations and fixtures shared by the
//! integration and acceptance tests. Each oracle takes the slow, direct
//! route so it shares no code path with the library.
#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Gamma, Normal, Poisson};

use celleval::{ExpressionMatrix, Layer};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

// ---------- partition metrics ----------

pub struct OracleMetrics {
    pub ari: f64,
    pub jaccard: f64,
    pub nmi: f64,
    pub purity: f64,
}

/// Enumerates every item pair for ARI and Jaccard; entropies from label
/// frequencies; purity by counting members of each cluster.
pub fn metrics_oracle(truth: &[usize], pred: &[usize]) -> OracleMetrics {
    let n = truth.len();
    let (mut n11, mut n10, mut n01, mut n00) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            match (truth[i] == truth[j], pred[i] == pred[j]) {
                (true, true) => n11 += 1.0,
                (true, false) => n10 += 1.0,
                (false, true) => n01 += 1.0,
                (false, false) => n00 += 1.0,
            }
        }
    }
    let ari_den = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    let ari = if ari_den == 0.0 {
        1.0
    } else {
        2.0 * (n00 * n11 - n01 * n10) / ari_den
    };
    let jaccard = if n11 + n10 + n01 == 0.0 {
        1.0
    } else {
        n11 / (n11 + n10 + n01)
    };

    let nf = n as f64;
    let freq = |xs: &[usize]| {
        let mut m: HashMap<usize, f64> = HashMap::new();
        for &x in xs {
            *m.entry(x).or_default() += 1.0;
        }
        m
    };
    let ft = freq(truth);
    let fp = freq(pred);
    let mut fj: HashMap<(usize, usize), f64> = HashMap::new();
    for i in 0..n {
        *fj.entry((truth[i], pred[i])).or_default() += 1.0;
    }
    let h = |m: &HashMap<usize, f64>| -> f64 { m.values().map(|c| -(c / nf) * (c / nf).ln()).sum() };
    let (ht, hp) = (h(&ft), h(&fp));
    let mi: f64 = fj
        .iter()
        .map(|(&(a, b), &c)| (c / nf) * ((c / nf) / ((ft[&a] / nf) * (fp[&b] / nf))).ln())
        .sum();
    let nmi = if ht == 0.0 && hp == 0.0 {
        1.0
    } else if ht == 0.0 || hp == 0.0 {
        0.0
    } else {
        (2.0 * mi / (ht + hp)).clamp(0.0, 1.0)
    };

    let mut majority = 0usize;
    for &c in fp.keys() {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for i in 0..n {
            if pred[i] == c {
                *counts.entry(truth[i]).or_default() += 1;
            }
        }
        majority += counts.values().max().unwrap();
    }
    OracleMetrics {
        ari,
        jaccard,
        nmi,
        purity: majority as f64 / nf,
    }
}

// ---------- Ward clustering ----------

/// Textbook agglomeration: every step recomputes the Ward cost of all
/// cluster pairs from centroids, `2|A||B|/(|A|+|B|) ‖c_A − c_B‖²`.
/// Returns `(a, b, height)` with scipy-style node ids (`n + step`).
pub fn naive_ward(points: &[f64], n: usize, dim: usize) -> Vec<(usize, usize, f64)> {
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let centroid = |members: &[usize]| -> Vec<f64> {
        let mut c = vec![0.0; dim];
        for &m in members {
            for d in 0..dim {
                c[d] += points[m * dim + d];
            }
        }
        c.iter().map(|x| x / members.len() as f64).collect()
    };
    let mut out = Vec::new();
    for step in 0..n - 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let (a, b) = (&clusters[i].1, &clusters[j].1);
                let (ca, cb) = (centroid(a), centroid(b));
                let sq: f64 = ca.iter().zip(&cb).map(|(x, y)| (x - y) * (x - y)).sum();
                let (na, nb) = (a.len() as f64, b.len() as f64);
                let cost = 2.0 * na * nb / (na + nb) * sq;
                if cost < best.0 {
                    best = (cost, i, j);
                }
            }
        }
        let (h, i, j) = best;
        let (idj, mj) = clusters.remove(j);
        let (idi, mut mi) = clusters.remove(i);
        mi.extend(mj);
        out.push((idi.min(idj), idi.max(idj), h));
        clusters.push((n + step, mi));
    }
    out
}

// ---------- PCA ----------

/// Projections of centered cells onto the top `k` eigenvectors of the dense
/// gene covariance, as cells × k row-major, plus the eigenvalues.
pub fn pca_oracle(m: &ExpressionMatrix, k: usize) -> (Vec<f64>, Vec<f64>) {
    let (g, n) = (m.n_genes(), m.n_cells());
    let mut x = DMatrix::<f64>::zeros(n, g);
    for gi in 0..g {
        let row = m.gene_row(gi);
        let mean = row.iter().sum::<f64>() / n as f64;
        for c in 0..n {
            x[(c, gi)] = row[c] - mean;
        }
    }
    let cov = x.transpose() * &x / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut proj = vec![0.0; n * k];
    let mut values = Vec::new();
    for (col, &o) in order.iter().take(k).enumerate() {
        values.push(eig.eigenvalues[o]);
        let v = eig.eigenvectors.column(o);
        let p = &x * v;
        for c in 0..n {
            proj[c * k + col] = p[c];
        }
    }
    (proj, values)
}

// ---------- tSNE ----------

/// KL(P‖Q) straight from the definition with a Student-t kernel.
pub fn kl_oracle(p: &[f64], y: &[f64], n: usize) -> f64 {
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = (y[2 * i] - y[2 * j]).powi(2) + (y[2 * i + 1] - y[2 * j + 1]).powi(2);
                z += 1.0 / (1.0 + d);
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && p[i * n + j] > 0.0 {
                let d = (y[2 * i] - y[2 * j]).powi(2) + (y[2 * i + 1] - y[2 * j + 1]).powi(2);
                let q = 1.0 / (1.0 + d) / z;
                kl += p[i * n + j] * (p[i * n + j] / q).ln();
            }
        }
    }
    kl
}

/// Central differences of [`kl_oracle`].
pub fn kl_gradient_fd(p: &[f64], y: &[f64], n: usize, eps: f64) -> Vec<f64> {
    let mut g = vec![0.0; y.len()];
    let mut yy = y.to_vec();
    for k in 0..y.len() {
        yy[k] = y[k] + eps;
        let up = kl_oracle(p, &yy, n);
        yy[k] = y[k] - eps;
        let down = kl_oracle(p, &yy, n);
        yy[k] = y[k];
        g[k] = (up - down) / (2.0 * eps);
    }
    g
}

// ---------- matrices ----------

/// Non-negative random matrix, normalized layer, roughly half zeros.
pub fn random_normalized(r: &mut StdRng, genes: usize, cells: usize) -> ExpressionMatrix {
    let data = (0..genes * cells)
        .map(|_| if r.gen_bool(0.5) { 0.0 } else { r.gen_range(0.0..5.0) })
        .collect();
    ExpressionMatrix::from_dense(ids("g", genes), ids("c", cells), data, Layer::Normalized).unwrap()
}

/// Negative-binomial counts with per-gene means spread log-uniformly over
/// `[lo, hi]`, optionally with extra structural zeros.
pub fn nb_counts(
    r: &mut StdRng,
    genes: usize,
    cells: usize,
    lo: f64,
    hi: f64,
    size: f64,
    zero_inflation: f64,
) -> ExpressionMatrix {
    let mut data = vec![0.0; genes * cells];
    for g in 0..genes {
        let mu = (lo.ln() + r.gen::<f64>() * (hi.ln() - lo.ln())).exp();
        let gamma = Gamma::new(size, mu / size).unwrap();
        for c in 0..cells {
            if zero_inflation > 0.0 && r.gen_bool(zero_inflation) {
                continue;
            }
            let rate: f64 = gamma.sample(r);
            if rate > 0.0 {
                data[g * cells + c] = Poisson::new(rate).unwrap().sample(r);
            }
        }
    }
    ExpressionMatrix::from_dense(ids("g", genes), ids("c", cells), data, Layer::RawCounts).unwrap()
}

/// Two populations in `dim` dimensions, offset so values stay positive,
/// with centers `sep` apart per axis and isotropic noise `noise`.
pub fn two_blobs(r: &mut StdRng, per: usize, dim: usize, sep: f64, noise: f64) -> (ExpressionMatrix, Vec<String>) {
    let n = 2 * per;
    let normal = Normal::new(0.0, noise).unwrap();
    let mut data = vec![0.0; dim * n];
    for c in 0..n {
        let shift = if c < per { 0.0 } else { sep };
        for g in 0..dim {
            data[g * n + c] = (100.0 + shift + normal.sample(r)).max(0.0);
        }
    }
    let labels = (0..n).map(|c| if c < per { "A" } else { "B" }.to_string()).collect();
    (
        ExpressionMatrix::from_dense(ids("dim", dim), ids("cell", n), data, Layer::Normalized).unwrap(),
        labels,
    )
}
