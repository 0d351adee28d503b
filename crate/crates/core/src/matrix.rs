//! Gene × cell expression matrices and cell annotations.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Which transform has been applied to a matrix's values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    /// Non-negative integer counts.
    RawCounts,
    /// Count-scale but non-integer values, e.g. the output of an imputation
    /// tool. Normalizable like raw counts, but not a valid simulation
    /// reference.
    CountScale,
    /// Library-size scaled and log1p transformed.
    Normalized,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::RawCounts => "raw_counts",
            Layer::CountScale => "count_scale",
            Layer::Normalized => "normalized",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stored sparse above this zero fraction.
const SPARSE_ZERO_FRACTION: f64 = 0.5;

#[derive(Debug, Clone)]
enum Storage {
    /// Row-major, genes × cells.
    Dense(Vec<f64>),
    /// Compressed rows: gene `g` owns `indices[indptr[g]..indptr[g + 1]]`.
    Sparse {
        indptr: Vec<usize>,
        indices: Vec<u32>,
        data: Vec<f64>,
    },
}

/// An immutable genes × cells matrix of non-negative finite values.
#[derive(Debug, Clone)]
pub struct ExpressionMatrix {
    gene_ids: Vec<String>,
    cell_ids: Vec<String>,
    layer: Layer,
    storage: Storage,
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

fn check_value(layer: Layer, g: usize, c: usize, v: f64) -> Result<()> {
    let reason = if !v.is_finite() {
        "not finite"
    } else if v < 0.0 {
        "negative"
    } else if layer == Layer::RawCounts && v.fract() != 0.0 {
        "raw counts must be integers"
    } else {
        return Ok(());
    };
    Err(Error::InvalidValue {
        gene: g,
        cell: c,
        value: v,
        reason,
    })
}

impl ExpressionMatrix {
    /// Build from row-major genes × cells values.
    pub fn from_dense(gene_ids: Vec<String>, cell_ids: Vec<String>, values: Vec<f64>, layer: Layer) -> Result<Self> {
        let (ng, nc) = (gene_ids.len(), cell_ids.len());
        if values.len() != ng * nc {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {ng} genes x {nc} cells",
                values.len()
            )));
        }
        check_unique(&gene_ids)?;
        check_unique(&cell_ids)?;
        for (i, &v) in values.iter().enumerate() {
            check_value(layer, i / nc.max(1), i % nc.max(1), v)?;
        }
        let storage = Self::choose_storage_dense(ng, nc, values);
        Ok(ExpressionMatrix {
            gene_ids,
            cell_ids,
            layer,
            storage,
        })
    }

    /// Build from per-gene rows.
    pub fn from_rows(gene_ids: Vec<String>, cell_ids: Vec<String>, rows: &[Vec<f64>], layer: Layer) -> Result<Self> {
        if rows.len() != gene_ids.len() || rows.iter().any(|r| r.len() != cell_ids.len()) {
            return Err(Error::ShapeMismatch(format!(
                "rows do not form a {} x {} grid",
                gene_ids.len(),
                cell_ids.len()
            )));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::from_dense(gene_ids, cell_ids, values, layer)
    }

    /// Build from 0-based `(gene, cell, value)` triplets; unlisted entries
    /// are zero. Duplicate coordinates are rejected.
    pub fn from_triplets(
        gene_ids: Vec<String>,
        cell_ids: Vec<String>,
        mut triplets: Vec<(usize, usize, f64)>,
        layer: Layer,
    ) -> Result<Self> {
        let (ng, nc) = (gene_ids.len(), cell_ids.len());
        check_unique(&gene_ids)?;
        check_unique(&cell_ids)?;
        for &(g, c, v) in &triplets {
            if g >= ng || c >= nc {
                return Err(Error::IndexOutOfRange {
                    row: g + 1,
                    col: c + 1,
                    rows: ng,
                    cols: nc,
                });
            }
            check_value(layer, g, c, v)?;
        }
        triplets.sort_by_key(|&(g, c, _)| (g, c));
        if let Some(w) = triplets.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::DuplicateCoordinate {
                row: w[0].0 + 1,
                col: w[0].1 + 1,
            });
        }
        let mut indptr = vec![0usize; ng + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        for &(g, c, v) in &triplets {
            if v != 0.0 {
                indptr[g + 1] += 1;
                indices.push(c as u32);
                data.push(v);
            }
        }
        for g in 0..ng {
            indptr[g + 1] += indptr[g];
        }
        let storage = Self::choose_storage_sparse(ng, nc, indptr, indices, data);
        Ok(ExpressionMatrix {
            gene_ids,
            cell_ids,
            layer,
            storage,
        })
    }

    fn choose_storage_dense(ng: usize, nc: usize, values: Vec<f64>) -> Storage {
        let total = ng * nc;
        let nnz = values.iter().filter(|&&v| v != 0.0).count();
        if total > 0 && (total - nnz) as f64 / total as f64 > SPARSE_ZERO_FRACTION {
            let mut indptr = Vec::with_capacity(ng + 1);
            let mut indices = Vec::with_capacity(nnz);
            let mut data = Vec::with_capacity(nnz);
            indptr.push(0);
            for row in values.chunks(nc.max(1)).take(ng) {
                for (c, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        indices.push(c as u32);
                        data.push(v);
                    }
                }
                indptr.push(indices.len());
            }
            // chunks() yields nothing for nc == 0
            indptr.resize(ng + 1, indices.len());
            Storage::Sparse { indptr, indices, data }
        } else {
            Storage::Dense(values)
        }
    }

    fn choose_storage_sparse(ng: usize, nc: usize, indptr: Vec<usize>, indices: Vec<u32>, data: Vec<f64>) -> Storage {
        let total = ng * nc;
        let nnz = data.len();
        if total == 0 || (total - nnz) as f64 / total as f64 > SPARSE_ZERO_FRACTION {
            return Storage::Sparse { indptr, indices, data };
        }
        let mut values = vec![0.0; total];
        for g in 0..ng {
            for k in indptr[g]..indptr[g + 1] {
                values[g * nc + indices[k] as usize] = data[k];
            }
        }
        Storage::Dense(values)
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn layer(&self) -> Layer {
        self.layer
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    pub fn get(&self, gene: usize, cell: usize) -> f64 {
        assert!(gene < self.n_genes() && cell < self.n_cells());
        match &self.storage {
            Storage::Dense(v) => v[gene * self.n_cells() + cell],
            Storage::Sparse { indptr, indices, data } => {
                let span = &indices[indptr[gene]..indptr[gene + 1]];
                match span.binary_search(&(cell as u32)) {
                    Ok(k) => data[indptr[gene] + k],
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// Number of non-zero entries.
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(v) => v.iter().filter(|&&x| x != 0.0).count(),
            Storage::Sparse { data, .. } => data.len(),
        }
    }

    /// Calls `f(cell, value)` for every non-zero entry of `gene`, in cell order.
    pub fn for_each_nonzero(&self, gene: usize, mut f: impl FnMut(usize, f64)) {
        match &self.storage {
            Storage::Dense(v) => {
                let nc = self.n_cells();
                for (c, &x) in v[gene * nc..(gene + 1) * nc].iter().enumerate() {
                    if x != 0.0 {
                        f(c, x);
                    }
                }
            }
            Storage::Sparse { indptr, indices, data } => {
                for k in indptr[gene]..indptr[gene + 1] {
                    f(indices[k] as usize, data[k]);
                }
            }
        }
    }

    /// Dense copy of one gene's values across cells.
    pub fn gene_row(&self, gene: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.n_cells()];
        self.for_each_nonzero(gene, |c, v| row[c] = v);
        row
    }

    /// Dense copy of all values, row-major genes × cells.
    pub fn to_dense(&self) -> Vec<f64> {
        let nc = self.n_cells();
        let mut out = vec![0.0; self.n_genes() * nc];
        for g in 0..self.n_genes() {
            self.for_each_nonzero(g, |c, v| out[g * nc + c] = v);
        }
        out
    }

    /// Per-cell column sums (library sizes for count layers).
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cells()];
        for g in 0..self.n_genes() {
            self.for_each_nonzero(g, |c, v| sums[c] += v);
        }
        sums
    }

    /// Per-cell count of non-zero genes.
    pub fn column_nonzero_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_cells()];
        for g in 0..self.n_genes() {
            self.for_each_nonzero(g, |c, _| counts[c] += 1);
        }
        counts
    }

    /// Subset (and possibly repeat) genes and cells by index. Repeated cells
    /// get ids suffixed with `~<occurrence>` so ids stay unique.
    pub fn select(&self, genes: &[usize], cells: &[usize]) -> Result<Self> {
        let mut seen: HashMap<usize, usize> = HashMap::new();
        let cell_ids: Vec<String> = cells
            .iter()
            .map(|&c| {
                let n = seen.entry(c).or_insert(0);
                *n += 1;
                if *n == 1 {
                    self.cell_ids[c].clone()
                } else {
                    format!("{}~{}", self.cell_ids[c], *n - 1)
                }
            })
            .collect();
        let gene_ids: Vec<String> = genes.iter().map(|&g| self.gene_ids[g].clone()).collect();
        let nc = cells.len();
        let mut values = vec![0.0; genes.len() * nc];
        for (gi, &g) in genes.iter().enumerate() {
            let row = self.gene_row(g);
            for (ci, &c) in cells.iter().enumerate() {
                values[gi * nc + ci] = row[c];
            }
        }
        Self::from_dense(gene_ids, cell_ids, values, self.layer)
    }

    /// Apply `f(gene, cell, value)` to every non-zero entry. `f` must map
    /// non-zero to non-zero for the zero pattern to be preserved; results
    /// are validated against `layer`.
    pub fn map_nonzero(&self, layer: Layer, f: impl Fn(usize, usize, f64) -> f64) -> Result<Self> {
        let mut triplets = Vec::with_capacity(self.nnz());
        for g in 0..self.n_genes() {
            self.for_each_nonzero(g, |c, v| triplets.push((g, c, f(g, c, v))));
        }
        Self::from_triplets(self.gene_ids.clone(), self.cell_ids.clone(), triplets, layer)
    }

    /// Same values under a different layer tag, re-validated.
    pub fn with_layer(&self, layer: Layer) -> Result<Self> {
        if layer == Layer::RawCounts {
            for g in 0..self.n_genes() {
                let mut bad = None;
                self.for_each_nonzero(g, |c, v| {
                    if bad.is_none() && v.fract() != 0.0 {
                        bad = Some((c, v));
                    }
                });
                if let Some((c, v)) = bad {
                    check_value(layer, g, c, v)?;
                }
            }
        }
        let mut m = self.clone();
        m.layer = layer;
        Ok(m)
    }

    /// `true` if every value is an integer.
    pub fn is_integral(&self) -> bool {
        (0..self.n_genes()).all(|g| {
            let mut ok = true;
            self.for_each_nonzero(g, |_, v| ok &= v.fract() == 0.0);
            ok
        })
    }

    /// SHA-256 over dimensions, ids, layer and values in row-major order.
    /// Independent of the internal storage representation.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_genes() as u64).to_le_bytes());
        h.update((self.n_cells() as u64).to_le_bytes());
        for id in self.gene_ids.iter().chain(&self.cell_ids) {
            h.update((id.len() as u64).to_le_bytes());
            h.update(id.as_bytes());
        }
        h.update(self.layer.as_str().as_bytes());
        for g in 0..self.n_genes() {
            for v in self.gene_row(g) {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl PartialEq for ExpressionMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.gene_ids == other.gene_ids
            && self.cell_ids == other.cell_ids
            && self.layer == other.layer
            && (0..self.n_genes()).all(|g| self.gene_row(g) == other.gene_row(g))
    }
}

/// Granularity of a cell-type annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationLevel {
    Major,
    Subtype,
}

/// One label per cell, aligned to a matrix's `cell_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAnnotation {
    cell_ids: Vec<String>,
    labels: Vec<String>,
    pub level: AnnotationLevel,
}

impl CellAnnotation {
    pub fn new(cell_ids: Vec<String>, labels: Vec<String>, level: AnnotationLevel) -> Result<Self> {
        if cell_ids.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} cells but {} labels",
                cell_ids.len(),
                labels.len()
            )));
        }
        check_unique(&cell_ids)?;
        Ok(CellAnnotation {
            cell_ids,
            labels,
            level,
        })
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Reorder (and subset) to the given cell ids, matching by id.
    pub fn aligned_to(&self, cell_ids: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = self
            .cell_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let labels = cell_ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&i| self.labels[i].clone())
                    .ok_or_else(|| Error::MissingId(id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        CellAnnotation::new(cell_ids.to_vec(), labels, self.level)
    }

    /// Pick labels by cell index, allowing repeats (bootstrap resamples).
    pub fn labels_at(&self, idx: &[usize]) -> Vec<String> {
        idx.iter().map(|&i| self.labels[i].clone()).collect()
    }
}
