//! Per-gene fidelity statistics: mean / sd / zero-fraction summaries, binned
//! curves over mean expression, histograms, and per-gene R² between two
//! matrices over the same genes and cells.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ExpressionMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneSummary {
    pub gene_id: String,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub sd: f64,
    pub zero_fraction: f64,
}

/// Statistic plotted against mean expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveStat {
    Sd,
    ZeroFraction,
}

/// Statistic whose distribution is histogrammed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryStat {
    Mean,
    Sd,
    ZeroFraction,
}

impl SummaryStat {
    fn of(self, s: &GeneSummary) -> f64 {
        match self {
            SummaryStat::Mean => s.mean,
            SummaryStat::Sd => s.sd,
            SummaryStat::ZeroFraction => s.zero_fraction,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SummaryStat::Mean => "mean",
            SummaryStat::Sd => "sd",
            SummaryStat::ZeroFraction => "zero_fraction",
        }
    }
}

impl CurveStat {
    fn of(self, s: &GeneSummary) -> f64 {
        match self {
            CurveStat::Sd => s.sd,
            CurveStat::ZeroFraction => s.zero_fraction,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CurveStat::Sd => "sd",
            CurveStat::ZeroFraction => "zero_fraction",
        }
    }
}

/// Equal-width bins with a per-bin value. Empty bins carry `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCurve {
    pub stat: String,
    pub bin_edges: Vec<f64>,
    pub bin_centers: Vec<f64>,
    pub y_values: Vec<Option<f64>>,
    pub bin_counts: Vec<usize>,
}

impl BinnedCurve {
    pub fn n_bins(&self) -> usize {
        self.bin_counts.len()
    }
}

/// Default bin count for curves and histograms.
pub const DEFAULT_BINS: usize = 30;

/// One summary per gene, in gene order.
pub fn gene_summaries(m: &ExpressionMatrix) -> Result<Vec<GeneSummary>> {
    let n = m.n_cells();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "sample sd needs at least 2 cells, got {n}"
        )));
    }
    let nf = n as f64;
    let summaries = (0..m.n_genes())
        .into_par_iter()
        .map(|g| {
            let mut nnz = 0usize;
            let mut sum = 0.0;
            let mut first = None;
            let mut constant = true;
            m.for_each_nonzero(g, |_, v| {
                nnz += 1;
                sum += v;
                match first {
                    None => first = Some(v),
                    Some(f) => constant &= f == v,
                }
            });
            let zeros = n - nnz;
            let mean = sum / nf;
            let sd = if nnz == 0 || (zeros == 0 && constant) {
                0.0
            } else {
                let mut ss = 0.0;
                m.for_each_nonzero(g, |_, v| ss += (v - mean) * (v - mean));
                ss += zeros as f64 * mean * mean;
                (ss / (nf - 1.0)).sqrt()
            };
            GeneSummary {
                gene_id: m.gene_ids()[g].clone(),
                mean,
                sd,
                zero_fraction: zeros as f64 / nf,
            }
        })
        .collect();
    Ok(summaries)
}

/// Equal-width edges over `[lo, hi]`; a zero-width range is widened to
/// `[lo, lo + 1]` so every value lands in the first bin.
fn equal_width_edges(lo: f64, hi: f64, n_bins: usize) -> Vec<f64> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    (0..=n_bins)
        .map(|i| {
            if i == n_bins {
                lo + span
            } else {
                lo + span * i as f64 / n_bins as f64
            }
        })
        .collect()
}

/// Bins are right-closed, `(e[i], e[i+1]]`, with the first bin also
/// closed on the left.
fn bin_index(edges: &[f64], x: f64) -> usize {
    let first_ge = edges.partition_point(|&e| e < x);
    first_ge.clamp(1, edges.len() - 1) - 1
}

fn bin_values(xs: &[f64], n_bins: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be at least 1".into()));
    }
    if xs.is_empty() {
        return Err(Error::InvalidArgument("no genes to bin".into()));
    }
    if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite value {x}")));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let edges = equal_width_edges(lo, hi, n_bins);
    let idx = xs.iter().map(|&x| bin_index(&edges, x)).collect();
    Ok((edges, idx))
}

fn centers(edges: &[f64]) -> Vec<f64> {
    edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Average of `y` among genes in each equal-width bin of mean expression.
pub fn binned_curve(summaries: &[GeneSummary], y: CurveStat, n_bins: usize) -> Result<BinnedCurve> {
    let means: Vec<f64> = summaries.iter().map(|s| s.mean).collect();
    let (edges, idx) = bin_values(&means, n_bins)?;
    Ok(curve_on_edges(summaries, y, edges, &idx))
}

/// Like [`binned_curve`] but over caller-supplied edges, so two datasets can
/// be compared bin by bin. Genes outside `[edges[0], edges[last]]` are
/// skipped.
pub fn binned_curve_with_edges(summaries: &[GeneSummary], y: CurveStat, edges: &[f64]) -> Result<BinnedCurve> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("edges must be strictly ascending".into()));
    }
    let (lo, hi) = (edges[0], edges[edges.len() - 1]);
    let (inside, idx): (Vec<GeneSummary>, Vec<usize>) = summaries
        .iter()
        .filter(|s| s.mean >= lo && s.mean <= hi)
        .map(|s| (s.clone(), bin_index(edges, s.mean)))
        .unzip();
    Ok(curve_on_edges(&inside, y, edges.to_vec(), &idx))
}

fn curve_on_edges(summaries: &[GeneSummary], y: CurveStat, edges: Vec<f64>, idx: &[usize]) -> BinnedCurve {
    let n_bins = edges.len() - 1;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (s, &b) in summaries.iter().zip(idx) {
        sums[b] += y.of(s);
        counts[b] += 1;
    }
    let y_values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    BinnedCurve {
        stat: y.as_str().to_string(),
        bin_centers: centers(&edges),
        bin_edges: edges,
        y_values,
        bin_counts: counts,
    }
}

/// Relative-frequency histogram of one summary statistic.
pub fn summary_histogram(summaries: &[GeneSummary], stat: SummaryStat, n_bins: usize) -> Result<BinnedCurve> {
    let xs: Vec<f64> = summaries.iter().map(|s| stat.of(s)).collect();
    let (edges, idx) = bin_values(&xs, n_bins)?;
    let mut counts = vec![0usize; n_bins];
    for &b in &idx {
        counts[b] += 1;
    }
    let total = xs.len() as f64;
    Ok(BinnedCurve {
        stat: stat.as_str().to_string(),
        bin_centers: centers(&edges),
        bin_edges: edges,
        y_values: counts.iter().map(|&c| Some(c as f64 / total)).collect(),
        bin_counts: counts,
    })
}

/// Per-gene squared Pearson correlation between two matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Result {
    /// `None` where either gene is constant across cells.
    pub per_gene: Vec<Option<f64>>,
    /// Mean over genes with a defined correlation.
    pub mean_r2: f64,
    pub excluded_genes: Vec<String>,
}

pub fn per_gene_r2(a: &ExpressionMatrix, b: &ExpressionMatrix) -> Result<R2Result> {
    if a.gene_ids() != b.gene_ids() || a.cell_ids() != b.cell_ids() {
        return Err(Error::ShapeMismatch(format!(
            "matrices differ in genes or cells ({}x{} vs {}x{})",
            a.n_genes(),
            a.n_cells(),
            b.n_genes(),
            b.n_cells()
        )));
    }
    let per_gene: Vec<Option<f64>> = (0..a.n_genes())
        .into_par_iter()
        .map(|g| squared_correlation(&a.gene_row(g), &b.gene_row(g)))
        .collect();
    let used: Vec<f64> = per_gene.iter().flatten().copied().collect();
    if used.is_empty() {
        return Err(Error::Degenerate(
            "every gene is constant in at least one matrix".into(),
        ));
    }
    let excluded_genes = per_gene
        .iter()
        .zip(a.gene_ids())
        .filter(|(r, _)| r.is_none())
        .map(|(_, id)| id.clone())
        .collect();
    Ok(R2Result {
        mean_r2: used.iter().sum::<f64>() / used.len() as f64,
        per_gene,
        excluded_genes,
    })
}

fn squared_correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxx += da * da;
        syy += db * db;
        sxy += da * db;
    }
    if sxx == 0.0 || syy == 0.0 || x.iter().all(|&v| v == x[0]) || y.iter().all(|&v| v == y[0]) {
        return None;
    }
    Some((sxy * sxy / (sxx * syy)).min(1.0))
}
