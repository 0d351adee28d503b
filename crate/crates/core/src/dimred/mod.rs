//! Principal component analysis and exact tSNE.

pub mod linalg;
mod pca;
mod tsne;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pca::{pca, pca_with, Pca, PcaOptions};
pub use tsne::{
    joint_probabilities, kl_divergence, kl_gradient, perplexity_calibration, squared_distances, tsne, TsneConfig,
    TsneResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMethod {
    Pca,
    Tsne,
    /// Coordinates loaded without metadata.
    External,
}

impl EmbeddingMethod {
    pub(crate) fn axis_prefix(self) -> &'static str {
        match self {
            EmbeddingMethod::Pca => "PC",
            EmbeddingMethod::Tsne => "tSNE",
            EmbeddingMethod::External => "dim",
        }
    }
}

/// Everything about an embedding except the coordinates; written as the
/// JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub method: EmbeddingMethod,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explained_variance: Option<Vec<f64>>,
    pub source_hash: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl EmbeddingMeta {
    pub fn external(dim: usize) -> Self {
        EmbeddingMeta {
            method: EmbeddingMethod::External,
            dim,
            explained_variance: None,
            source_hash: String::new(),
            params: serde_json::Value::Null,
        }
    }
}

/// Cells × `dim` coordinates, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    cell_ids: Vec<String>,
    coords: Vec<f64>,
    pub meta: EmbeddingMeta,
}

impl Embedding {
    pub fn new(cell_ids: Vec<String>, coords: Vec<f64>, meta: EmbeddingMeta) -> Result<Self> {
        if coords.len() != cell_ids.len() * meta.dim {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates for {} points in {} dimensions",
                coords.len(),
                cell_ids.len(),
                meta.dim
            )));
        }
        if let Some(i) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite coordinate for point {}",
                i / meta.dim.max(1)
            )));
        }
        if let Some(ev) = &meta.explained_variance {
            let ok = ev.iter().all(|&v| v >= 0.0 && v.is_finite()) && ev.windows(2).all(|w| w[0] >= w[1]);
            if !ok {
                return Err(Error::InvalidArgument(
                    "explained variance must be non-negative and non-increasing".into(),
                ));
            }
        }
        Ok(Embedding { cell_ids, coords, meta })
    }

    /// Plain coordinates with no provenance, e.g. for tests and hooks.
    pub fn from_points(cell_ids: Vec<String>, coords: Vec<f64>, dim: usize) -> Result<Self> {
        Self::new(cell_ids, coords, EmbeddingMeta::external(dim))
    }

    pub fn n_points(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim()..(i + 1) * self.dim()]
    }

    /// Rows picked by index, repeats allowed; repeated ids get `~n` suffixes.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut seen = std::collections::HashMap::new();
        let mut ids = Vec::with_capacity(idx.len());
        let mut coords = Vec::with_capacity(idx.len() * self.dim());
        for &i in idx {
            let n = seen.entry(i).or_insert(0usize);
            ids.push(if *n == 0 {
                self.cell_ids[i].clone()
            } else {
                format!("{}~{}", self.cell_ids[i], n)
            });
            *n += 1;
            coords.extend_from_slice(self.point(i));
        }
        Embedding::new(ids, coords, self.meta.clone())
    }
}
