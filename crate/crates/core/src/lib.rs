//! Toolkit for benchmarking single-cell expression imputation: a seeded
//! Poisson-Gamma count simulator, per-gene fidelity statistics, PCA and
//! exact tSNE, hierarchical clustering, and partition-agreement metrics
//! driven by a bootstrap benchmark.

// `!(x > 0.0)` is used deliberately so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod dimred;
pub mod error;
pub mod hclust;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod preprocess;
pub mod rng;
pub mod sampling;
pub mod stats;
pub mod synth;

pub use bench::{BenchConfig, BenchResult};
pub use dimred::{Embedding, EmbeddingMeta, EmbeddingMethod};
pub use error::{Error, Result};
pub use hclust::{Dendrogram, Linkage, Partition};
pub use matrix::{AnnotationLevel, CellAnnotation, ExpressionMatrix, Layer};
pub use metrics::{ContingencyTable, MetricReport};
pub use stats::GeneSummary;
pub use synth::SynthConfig;
