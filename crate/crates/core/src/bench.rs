//! Bootstrap benchmark: for each candidate matrix, resample cells, embed,
//! cluster at each `k` and score against reference labels.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dimred::{pca_with, Embedding, PcaOptions};
use crate::error::{Error, Result};
use crate::hclust::{cut, linkage, Linkage, Partition};
use crate::io;
use crate::matrix::{AnnotationLevel, CellAnnotation, ExpressionMatrix, Layer};
use crate::metrics::{evaluate, MetricReport, NMI_NORMALIZATION};
use crate::preprocess::{normalize, NORMALIZATION_ID};
use crate::rng::{Domain, Stream, GENERATOR_ID};

/// Key in [`BenchConfig::truth`] used for any `k` without its own entry.
pub const DEFAULT_TRUTH_KEY: &str = "default";

const MAX_ATTEMPTS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub k_values: Vec<usize>,
    pub n_pcs: usize,
    pub n_bootstrap: usize,
    pub seed: u64,
    pub linkage: Linkage,
    /// Compute PCA once on all cells and resample embedding rows, instead
    /// of resampling before normalization and PCA.
    pub fixed_pcs: bool,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    pub datasets: BTreeMap<String, PathBuf>,
    /// Label file per `k` (keyed by its decimal string) or [`DEFAULT_TRUTH_KEY`].
    pub truth: BTreeMap<String, PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            k_values: vec![9, 47],
            n_pcs: 10,
            n_bootstrap: 100,
            seed: 0,
            linkage: Linkage::Ward,
            fixed_pcs: false,
            threads: 0,
            datasets: BTreeMap::new(),
            truth: BTreeMap::new(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() {
            return Err(Error::Config("k_values must not be empty".into()));
        }
        if let Some(k) = self.k_values.iter().find(|&&k| k < 2) {
            return Err(Error::Config(format!("every k must be at least 2, got {k}")));
        }
        if self.n_bootstrap == 0 {
            return Err(Error::Config("n_bootstrap must be at least 1".into()));
        }
        if self.n_pcs == 0 {
            return Err(Error::Config("n_pcs must be at least 1".into()));
        }
        Ok(())
    }

    /// Parse TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: BenchConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for p in cfg.datasets.values_mut().chain(cfg.truth.values_mut()) {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn truth_path(&self, k: usize) -> Option<&Path> {
        self.truth
            .get(&k.to_string())
            .or_else(|| self.truth.get(DEFAULT_TRUTH_KEY))
            .map(PathBuf::as_path)
    }

    pub fn pca_mode(&self) -> &'static str {
        if self.fixed_pcs {
            "fixed"
        } else {
            "per_replicate"
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn bootstrap_stream(seed: u64, replicate: usize, attempt: u64) -> Stream {
    Stream::new(seed, Domain::Bootstrap, (attempt << 32) | replicate as u64)
}

/// `n_cells` uniform draws with replacement for one replicate.
pub fn bootstrap_indices(n_cells: usize, replicate: usize, seed: u64) -> Result<Vec<usize>> {
    attempt_indices(n_cells, replicate, seed, 0)
}

fn attempt_indices(n_cells: usize, replicate: usize, seed: u64, attempt: u64) -> Result<Vec<usize>> {
    if n_cells < 2 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least 2 cells, got {n_cells}"
        )));
    }
    let mut s = bootstrap_stream(seed, replicate, attempt);
    Ok((0..n_cells).map(|_| s.below(n_cells as u64) as usize).collect())
}

fn distinct(idx: &[usize], n: usize) -> usize {
    let mut seen = vec![false; n];
    idx.iter().filter(|&&i| !std::mem::replace(&mut seen[i], true)).count()
}

/// First resample with at least `k` distinct cells, and its attempt number.
fn resample_for(n_cells: usize, k: usize, replicate: usize, seed: u64) -> Result<(Vec<usize>, u64)> {
    if n_cells < k {
        return Err(Error::InvalidArgument(format!(
            "{n_cells} cells cannot form {k} clusters"
        )));
    }
    for attempt in 0..MAX_ATTEMPTS {
        let idx = attempt_indices(n_cells, replicate, seed, attempt)?;
        if distinct(&idx, n_cells) >= k {
            if attempt > 0 {
                warn!("replicate {replicate}, k={k}: resample retried {attempt} time(s)");
            }
            return Ok((idx, attempt));
        }
    }
    Err(Error::Degenerate(format!(
        "replicate {replicate}: no resample with {k} distinct cells after {MAX_ATTEMPTS} attempts"
    )))
}

/// How predicted labels are produced; `Truth` bypasses embedding and
/// clustering entirely and exists to test the surrounding machinery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predictor {
    Cluster,
    Truth,
}

fn pca_options(cfg: &BenchConfig) -> PcaOptions {
    PcaOptions {
        seed: cfg.seed,
        ..PcaOptions::new(cfg.n_pcs)
    }
}

fn normalized(m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    if m.layer() == Layer::Normalized {
        Ok(m.clone())
    } else {
        normalize(m)
    }
}

fn embed(m: &ExpressionMatrix, cfg: &BenchConfig) -> Result<Embedding> {
    Ok(pca_with(&normalized(m)?, &pca_options(cfg))?.embedding)
}

fn resampled_embedding(
    m: &ExpressionMatrix,
    fixed: Option<&Embedding>,
    idx: &[usize],
    cfg: &BenchConfig,
) -> Result<Embedding> {
    match fixed {
        Some(e) => e.select_rows(idx),
        None => {
            let all_genes: Vec<usize> = (0..m.n_genes()).collect();
            embed(&m.select(&all_genes, idx)?, cfg)
        }
    }
}

fn truth_partition(truth: &CellAnnotation, idx: &[usize]) -> Partition {
    Partition::from_labels(&truth.labels_at(idx)).0
}

/// One bootstrap replicate at one `k`; `truth` must be aligned to `m`.
pub fn run_replicate(
    m: &ExpressionMatrix,
    truth: &CellAnnotation,
    cfg: &BenchConfig,
    k: usize,
    replicate: usize,
) -> Result<MetricReport> {
    run_replicate_with(m, truth, cfg, k, replicate, Predictor::Cluster)
}

pub fn run_replicate_with(
    m: &ExpressionMatrix,
    truth: &CellAnnotation,
    cfg: &BenchConfig,
    k: usize,
    replicate: usize,
    predictor: Predictor,
) -> Result<MetricReport> {
    check_aligned(m, truth)?;
    let fixed = match (cfg.fixed_pcs, predictor) {
        (true, Predictor::Cluster) => Some(embed(m, cfg)?),
        _ => None,
    };
    let (idx, _) = resample_for(m.n_cells(), k, replicate, cfg.seed)?;
    let reference = truth_partition(truth, &idx);
    let pred = match predictor {
        Predictor::Truth => reference.clone(),
        Predictor::Cluster => {
            let e = resampled_embedding(m, fixed.as_ref(), &idx, cfg)?;
            cut(&linkage(&e, cfg.linkage)?, k)?
        }
    };
    evaluate(&reference, &pred)
}

fn check_aligned(m: &ExpressionMatrix, truth: &CellAnnotation) -> Result<()> {
    if truth.cell_ids() != m.cell_ids() {
        return Err(Error::ShapeMismatch("annotation is not aligned to matrix cells".into()));
    }
    Ok(())
}

/// Matrices and per-`k` labels, already aligned.
#[derive(Debug, Clone)]
pub struct BenchInput {
    pub datasets: Vec<(String, ExpressionMatrix)>,
    /// Reference labels by `k`, in the order of the first dataset's cells.
    pub truth: BTreeMap<usize, CellAnnotation>,
}

impl BenchInput {
    /// Align every truth to the first dataset and check that all datasets
    /// share its cells.
    pub fn new(datasets: Vec<(String, ExpressionMatrix)>, truth: BTreeMap<usize, CellAnnotation>) -> Result<Self> {
        let first = datasets
            .first()
            .ok_or_else(|| Error::Config("no datasets".into()))?
            .1
            .cell_ids()
            .to_vec();
        for (name, m) in &datasets {
            if m.cell_ids() != first.as_slice() {
                return Err(Error::Dataset {
                    name: name.clone(),
                    source: Box::new(Error::ShapeMismatch(
                        "cell ids differ from the first dataset (same cells, same order required)".into(),
                    )),
                });
            }
        }
        let truth = truth
            .into_iter()
            .map(|(k, t)| Ok((k, t.aligned_to(&first)?)))
            .collect::<Result<_>>()?;
        Ok(BenchInput { datasets, truth })
    }
}

/// Load every dataset and truth file named by `cfg`, failing before any
/// heavy computation.
pub fn load_inputs(cfg: &BenchConfig) -> Result<BenchInput> {
    cfg.validate()?;
    if cfg.datasets.is_empty() {
        return Err(Error::Config("no datasets configured".into()));
    }
    let mut datasets = Vec::new();
    for (name, path) in &cfg.datasets {
        let m = io::load_matrix(path).map_err(|e| Error::Dataset {
            name: name.clone(),
            source: Box::new(e),
        })?;
        info!(
            "dataset {name}: {} genes x {} cells ({})",
            m.n_genes(),
            m.n_cells(),
            m.layer()
        );
        datasets.push((name.clone(), m));
    }
    let mut loaded: BTreeMap<PathBuf, CellAnnotation> = BTreeMap::new();
    let mut truth = BTreeMap::new();
    for &k in &cfg.k_values {
        let path = cfg
            .truth_path(k)
            .ok_or_else(|| Error::Config(format!("no truth file for k={k}")))?;
        if !loaded.contains_key(path) {
            let level = if cfg.truth.contains_key(&k.to_string()) {
                AnnotationLevel::Subtype
            } else {
                AnnotationLevel::Major
            };
            loaded.insert(path.to_path_buf(), io::load_annotation(path, level)?);
        }
        truth.insert(k, loaded[path].clone());
    }
    let input = BenchInput::new(datasets, truth)?;
    for (name, m) in &input.datasets {
        for t in input.truth.values() {
            check_aligned(m, t).map_err(|e| Error::Dataset {
                name: name.clone(),
                source: Box::new(e),
            })?;
        }
    }
    Ok(input)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub dataset: String,
    pub k: usize,
    pub replicate: usize,
    /// Extra resamples drawn because the first had fewer than `k` distinct cells.
    pub retries: u64,
    pub report: MetricReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    /// Linear interpolation between order statistics (`(n-1)p` positions).
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = (v.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(v.len() - 1);
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Quartiles {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

pub const METRIC_NAMES: [&str; 4] = ["ari", "jaccard", "nmi", "purity"];

fn metric(r: &MetricReport, name: &str) -> f64 {
    match name {
        "ari" => r.ari,
        "jaccard" => r.jaccard,
        "nmi" => r.nmi,
        "purity" => r.purity,
        _ => unreachable!("unknown metric {name}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub dataset: String,
    pub k: usize,
    pub metric: String,
    #[serde(flatten)]
    pub stats: Quartiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub pca_mode: String,
    pub resample: String,
    pub n_bootstrap: usize,
    pub nmi_normalization: String,
    pub records: Vec<ReplicateRecord>,
    pub summary: Vec<SummaryEntry>,
}

impl BenchResult {
    pub fn summary_for(&self, dataset: &str, k: usize, metric: &str) -> Option<&Quartiles> {
        self.summary
            .iter()
            .find(|e| e.dataset == dataset && e.k == k && e.metric == metric)
            .map(|e| &e.stats)
    }

    pub fn replicates_csv(&self) -> String {
        let mut out = String::from("dataset,k,replicate,ari,jaccard,nmi,purity\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.dataset, r.k, r.replicate, r.report.ari, r.report.jaccard, r.report.nmi, r.report.purity
            );
        }
        out
    }

    /// Summary without per-replicate records; deterministic for a given
    /// configuration and inputs.
    pub fn summary_json(&self) -> String {
        let v = serde_json::json!({
            "pca_mode": self.pca_mode,
            "resample": self.resample,
            "n_bootstrap": self.n_bootstrap,
            "nmi_normalization": self.nmi_normalization,
            "summary": self.summary,
        });
        serde_json::to_string_pretty(&v).expect("summary serializes")
    }
}

/// Load inputs named by `cfg` and run the full grid.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchResult> {
    let input = load_inputs(cfg)?;
    run_loaded(&input, cfg, Predictor::Cluster)
}

/// Full grid over already-loaded inputs, on a pool of `cfg.threads` workers.
pub fn run_loaded(input: &BenchInput, cfg: &BenchConfig, predictor: Predictor) -> Result<BenchResult> {
    cfg.validate()?;
    for k in &cfg.k_values {
        if !input.truth.contains_key(k) {
            return Err(Error::Config(format!("no truth labels for k={k}")));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| run_grid(input, cfg, predictor))
}

fn run_grid(input: &BenchInput, cfg: &BenchConfig, predictor: Predictor) -> Result<BenchResult> {
    let fixed: Vec<Option<Embedding>> = input
        .datasets
        .par_iter()
        .map(|(name, m)| match (cfg.fixed_pcs, predictor) {
            (true, Predictor::Cluster) => embed(m, cfg).map(Some).map_err(|e| Error::Dataset {
                name: name.clone(),
                source: Box::new(e),
            }),
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;

    let tasks: Vec<(usize, usize)> = (0..input.datasets.len())
        .flat_map(|d| (0..cfg.n_bootstrap).map(move |r| (d, r)))
        .collect();
    let mut records: Vec<ReplicateRecord> = tasks
        .par_iter()
        .map(|&(d, r)| run_task(input, cfg, predictor, fixed[d].as_ref(), d, r))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    records.sort_by(|a, b| (&a.dataset, a.k, a.replicate).cmp(&(&b.dataset, b.k, b.replicate)));

    let mut summary = Vec::new();
    for (name, _) in &input.datasets {
        for &k in &cfg.k_values {
            let rows: Vec<&MetricReport> = records
                .iter()
                .filter(|r| &r.dataset == name && r.k == k)
                .map(|r| &r.report)
                .collect();
            for m in METRIC_NAMES {
                let values: Vec<f64> = rows.iter().map(|r| metric(r, m)).collect();
                summary.push(SummaryEntry {
                    dataset: name.clone(),
                    k,
                    metric: m.to_string(),
                    stats: Quartiles::of(&values).expect("n_bootstrap >= 1"),
                });
            }
        }
    }
    Ok(BenchResult {
        pca_mode: cfg.pca_mode().to_string(),
        resample: if cfg.fixed_pcs {
            "after_pca"
        } else {
            "before_normalization"
        }
        .to_string(),
        n_bootstrap: cfg.n_bootstrap,
        nmi_normalization: NMI_NORMALIZATION.to_string(),
        records,
        summary,
    })
}

/// One dataset and replicate for every `k`. Values of `k` that settle on the
/// same resample share its embedding and dendrogram.
fn run_task(
    input: &BenchInput,
    cfg: &BenchConfig,
    predictor: Predictor,
    fixed: Option<&Embedding>,
    d: usize,
    replicate: usize,
) -> Result<Vec<ReplicateRecord>> {
    let (name, m) = &input.datasets[d];
    let wrap = |e: Error| Error::Dataset {
        name: name.clone(),
        source: Box::new(e),
    };
    let mut by_attempt: BTreeMap<u64, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for &k in &cfg.k_values {
        let (idx, attempt) = resample_for(m.n_cells(), k, replicate, cfg.seed).map_err(wrap)?;
        by_attempt.entry(attempt).or_insert_with(|| (idx, Vec::new())).1.push(k);
    }
    let mut out = Vec::new();
    for (attempt, (idx, ks)) in by_attempt {
        let dendrogram = match predictor {
            Predictor::Cluster => {
                let e = resampled_embedding(m, fixed, &idx, cfg).map_err(wrap)?;
                Some(linkage(&e, cfg.linkage).map_err(wrap)?)
            }
            Predictor::Truth => None,
        };
        for k in ks {
            let reference = truth_partition(&input.truth[&k], &idx);
            let pred = match &dendrogram {
                Some(dg) => cut(dg, k).map_err(wrap)?,
                None => reference.clone(),
            };
            out.push(ReplicateRecord {
                dataset: name.clone(),
                k,
                replicate,
                retries: attempt,
                report: evaluate(&reference, &pred).map_err(wrap)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub rng: String,
    pub normalization: String,
    pub pca_mode: String,
    pub config_hash: String,
    pub config: BenchConfig,
    pub dataset_hashes: BTreeMap<String, String>,
}

pub fn provenance(cfg: &BenchConfig, input: &BenchInput) -> Provenance {
    Provenance {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        rng: GENERATOR_ID.to_string(),
        normalization: NORMALIZATION_ID.to_string(),
        pca_mode: cfg.pca_mode().to_string(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        dataset_hashes: input
            .datasets
            .iter()
            .map(|(n, m)| (n.clone(), m.content_hash()))
            .collect(),
    }
}

/// Write `replicates.csv`, `summary.json` and `provenance.json` into `dir`.
pub fn write_outputs(dir: &Path, result: &BenchResult, prov: &Provenance) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("replicates.csv");
    std::fs::write(&csv, result.replicates_csv()).map_err(|e| Error::io(&csv, e))?;
    let summary = dir.join("summary.json");
    std::fs::write(&summary, result.summary_json() + "\n").map_err(|e| Error::io(&summary, e))?;
    io::write_json(&dir.join("provenance.json"), prov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n_per: usize, sep: f64, seed: u64) -> (ExpressionMatrix, CellAnnotation) {
        let n_genes = 12;
        let n = 2 * n_per;
        let mut s = Stream::new(seed, Domain::Counts, 0);
        let mut data = vec![0.0; n_genes * n];
        for c in 0..n {
            let group = c / n_per;
            for g in 0..n_genes {
                let base = if (g < n_genes / 2) == (group == 0) {
                    5.0 + sep
                } else {
                    5.0
                };
                data[g * n + c] = (base + crate::sampling::standard_normal(&mut s) * 0.3).max(0.0);
            }
        }
        let genes = (0..n_genes).map(|g| format!("g{g}")).collect();
        let cells: Vec<String> = (0..n).map(|c| format!("c{c}")).collect();
        let labels = (0..n).map(|c| if c < n_per { "a" } else { "b" }.to_string()).collect();
        (
            ExpressionMatrix::from_dense(genes, cells.clone(), data, Layer::Normalized).unwrap(),
            CellAnnotation::new(cells, labels, AnnotationLevel::Major).unwrap(),
        )
    }

    fn cfg(n_bootstrap: usize) -> BenchConfig {
        BenchConfig {
            k_values: vec![2],
            n_pcs: 3,
            n_bootstrap,
            seed: 7,
            ..BenchConfig::default()
        }
    }

    fn input(names: &[&str]) -> BenchInput {
        let (m, t) = blobs(20, 4.0, 1);
        BenchInput::new(
            names.iter().map(|n| (n.to_string(), m.clone())).collect(),
            BTreeMap::from([(2, t)]),
        )
        .unwrap()
    }

    #[test]
    fn bootstrap_is_deterministic_and_in_range() {
        let a = bootstrap_indices(50, 3, 9).unwrap();
        assert_eq!(a, bootstrap_indices(50, 3, 9).unwrap());
        assert_ne!(a, bootstrap_indices(50, 4, 9).unwrap());
        assert!(a.iter().all(|&i| i < 50));
        assert!(bootstrap_indices(1, 0, 0).is_err());
    }

    #[test]
    fn bootstrap_uniformity() {
        let n = 20;
        let mut counts = vec![0usize; n];
        let reps = 100_000 / n;
        for r in 0..reps {
            for i in bootstrap_indices(n, r, 42).unwrap() {
                counts[i] += 1;
            }
        }
        let total = (reps * n) as f64;
        let p = 1.0 / n as f64;
        let se = (p * (1.0 - p) / total).sqrt();
        for c in counts {
            assert!((c as f64 / total - p).abs() < 4.0 * se);
        }
    }

    #[test]
    fn separated_blobs_score_one() {
        let (m, t) = blobs(20, 4.0, 1);
        for r in 0..5 {
            let rep = run_replicate(&m, &t, &cfg(1), 2, r).unwrap();
            assert_eq!(rep.ari, 1.0);
        }
    }

    #[test]
    fn single_class_truth_has_purity_one() {
        let (m, _) = blobs(10, 4.0, 2);
        let t = CellAnnotation::new(m.cell_ids().to_vec(), vec!["x".into(); 20], AnnotationLevel::Major).unwrap();
        assert_eq!(run_replicate(&m, &t, &cfg(1), 2, 0).unwrap().purity, 1.0);
    }

    #[test]
    fn grid_cardinality_and_determinism() {
        let res = run_loaded(&input(&["one"]), &cfg(1), Predictor::Cluster).unwrap();
        assert_eq!(res.records.len(), 1);
        let inp = input(&["x", "y"]);
        let mut c = cfg(6);
        c.k_values = vec![2, 3];
        let mut inp3 = inp.clone();
        inp3.truth.insert(3, inp.truth[&2].clone());
        let a = run_loaded(&inp3, &c, Predictor::Cluster).unwrap();
        assert_eq!(a.records.len(), 2 * 2 * 6);
        let b = run_loaded(
            &inp3,
            &BenchConfig {
                threads: 1,
                ..c.clone()
            },
            Predictor::Cluster,
        )
        .unwrap();
        assert_eq!(a.summary_json(), b.summary_json());
        assert_eq!(a.replicates_csv(), b.replicates_csv());
    }

    #[test]
    fn identical_datasets_give_identical_distributions() {
        let res = run_loaded(&input(&["p", "q"]), &cfg(4), Predictor::Cluster).unwrap();
        for m in METRIC_NAMES {
            assert_eq!(res.summary_for("p", 2, m), res.summary_for("q", 2, m));
        }
    }

    #[test]
    fn replicates_do_not_depend_on_batch_size() {
        let inp = input(&["d"]);
        let small = run_loaded(&inp, &cfg(3), Predictor::Cluster).unwrap();
        let large = run_loaded(&inp, &cfg(7), Predictor::Cluster).unwrap();
        assert_eq!(small.records[..], large.records[..3]);
    }

    #[test]
    fn truth_hook_scores_one() {
        let res = run_loaded(&input(&["d"]), &cfg(5), Predictor::Truth).unwrap();
        for r in &res.records {
            let m = &r.report;
            assert_eq!((m.ari, m.jaccard, m.nmi, m.purity), (1.0, 1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn fixed_pcs_mode_runs() {
        let inp = input(&["d"]);
        let c = BenchConfig {
            fixed_pcs: true,
            ..cfg(3)
        };
        let res = run_loaded(&inp, &c, Predictor::Cluster).unwrap();
        assert_eq!(res.pca_mode, "fixed");
        assert!(res.records.iter().all(|r| r.report.ari == 1.0));
    }

    #[test]
    fn quartiles() {
        let q = Quartiles::of(&[3.0; 5]).unwrap();
        assert_eq!((q.min, q.q1, q.median, q.q3, q.max), (3.0, 3.0, 3.0, 3.0, 3.0));
        let q = Quartiles::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (1.75, 2.5, 3.25));
        assert!(Quartiles::of(&[]).is_none());
    }

    #[test]
    fn config_parsing() {
        let text = r#"
            k_values = [2, 5]
            n_bootstrap = 3
            seed = 11
            linkage = "average"
            [datasets]
            original = "orig.mtx"
            [truth]
            default = "/abs/labels.tsv"
            5 = "sub.tsv"
        "#;
        let c = BenchConfig::from_toml_str(text, Path::new("/base")).unwrap();
        assert_eq!(c.n_pcs, 10);
        assert_eq!(c.linkage, Linkage::Average);
        assert_eq!(c.datasets["original"], PathBuf::from("/base/orig.mtx"));
        assert_eq!(c.truth_path(2), Some(Path::new("/abs/labels.tsv")));
        assert_eq!(c.truth_path(5), Some(Path::new("/base/sub.tsv")));
        assert!(BenchConfig::from_toml_str("bogus = 1", Path::new(".")).is_err());
        assert!(BenchConfig {
            k_values: vec![1],
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(BenchConfig { n_bootstrap: 0, ..c }.validate().is_err());
    }

    #[test]
    fn missing_dataset_is_reported_by_name() {
        let mut c = cfg(1);
        c.datasets.insert("ghost".into(), PathBuf::from("/nonexistent/x.csv"));
        c.truth
            .insert(DEFAULT_TRUTH_KEY.into(), PathBuf::from("/nonexistent/t.tsv"));
        let err = load_inputs(&c).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }
}
