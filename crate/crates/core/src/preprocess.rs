//! Reference filtering and library-size normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ExpressionMatrix, Layer};

/// Thresholds for selecting high-quality cells and well-detected genes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterThresholds {
    pub min_cell_total: f64,
    pub min_gene_nonzero_fraction: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds {
            min_cell_total: 1000.0,
            min_gene_nonzero_fraction: 0.1,
        }
    }
}

/// Name of the normalization recorded in reports.
pub const NORMALIZATION_ID: &str = "median_library_size_log1p";

/// Keep cells whose library size is at least `min_cell_total`, then genes
/// detected in at least `min_gene_nonzero_fraction` of the kept cells.
///
/// Dropping genes lowers library sizes, so the two steps are repeated until
/// neither removes anything; the result is therefore a fixed point and
/// filtering again with the same thresholds changes nothing. Original
/// ordering is preserved.
pub fn filter_reference(m: &ExpressionMatrix, thresholds: FilterThresholds) -> Result<ExpressionMatrix> {
    if m.layer() != Layer::RawCounts {
        return Err(Error::WrongLayer {
            expected: "raw_counts",
            found: m.layer().as_str(),
        });
    }
    let FilterThresholds {
        min_cell_total,
        min_gene_nonzero_fraction,
    } = thresholds;
    if !(min_cell_total >= 0.0) || !(0.0..=1.0).contains(&min_gene_nonzero_fraction) {
        return Err(Error::InvalidArgument(format!(
            "thresholds out of range: min_cell_total={min_cell_total}, \
             min_gene_nonzero_fraction={min_gene_nonzero_fraction}"
        )));
    }

    let mut genes: Vec<usize> = (0..m.n_genes()).collect();
    let mut cells: Vec<usize> = (0..m.n_cells()).collect();
    loop {
        let mut keep_cell = vec![false; m.n_cells()];
        let mut sums = vec![0.0; m.n_cells()];
        for &g in &genes {
            m.for_each_nonzero(g, |c, v| sums[c] += v);
        }
        for &c in &cells {
            keep_cell[c] = sums[c] >= min_cell_total;
        }
        let next_cells: Vec<usize> = cells.iter().copied().filter(|&c| keep_cell[c]).collect();
        if next_cells.is_empty() {
            return Err(Error::EmptyAfterFilter("cells"));
        }

        let n = next_cells.len() as f64;
        let next_genes: Vec<usize> = genes
            .iter()
            .copied()
            .filter(|&g| {
                let mut detected = 0usize;
                m.for_each_nonzero(g, |c, _| detected += usize::from(keep_cell[c]));
                detected as f64 / n >= min_gene_nonzero_fraction
            })
            .collect();
        if next_genes.is_empty() {
            return Err(Error::EmptyAfterFilter("genes"));
        }

        let stable = next_cells.len() == cells.len() && next_genes.len() == genes.len();
        cells = next_cells;
        genes = next_genes;
        if stable {
            break;
        }
    }
    if genes.len() == m.n_genes() && cells.len() == m.n_cells() {
        return Ok(m.clone());
    }
    m.select(&genes, &cells)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `log1p(value · median_library_size / library_size)` per cell.
pub fn normalize(m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    if m.layer() == Layer::Normalized {
        return Err(Error::WrongLayer {
            expected: "raw_counts or count_scale",
            found: m.layer().as_str(),
        });
    }
    let sizes = m.column_sums();
    if let Some(c) = sizes.iter().position(|&s| s <= 0.0) {
        return Err(Error::ZeroLibrarySize(m.cell_ids()[c].clone()));
    }
    if sizes.is_empty() {
        return Err(Error::Degenerate("matrix has no cells".into()));
    }
    let target = median(&sizes);
    let scale: Vec<f64> = sizes.iter().map(|s| target / s).collect();
    m.map_nonzero(Layer::Normalized, |_, c, v| (v * scale[c]).ln_1p())
}
