use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use celleval::bench::{self, BenchConfig, DEFAULT_TRUTH_KEY};
use celleval::dimred::{pca_with, tsne, PcaOptions, TsneConfig};
use celleval::hclust::{cut, linkage, Linkage};
use celleval::io;
use celleval::metrics::{contingency, evaluate_table};
use celleval::preprocess::{filter_reference, normalize, FilterThresholds, NORMALIZATION_ID};
use celleval::stats::{
    binned_curve, binned_curve_with_edges, gene_summaries, per_gene_r2, summary_histogram, BinnedCurve, CurveStat,
    GeneSummary, SummaryStat, DEFAULT_BINS,
};
use celleval::synth::{generate, SynthConfig};
use celleval::{AnnotationLevel, ExpressionMatrix, Layer, Partition};

#[derive(Parser)]
#[command(
    name = "celleval",
    version,
    about = "Benchmark single-cell imputation outputs by clustering fidelity"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Directory for outputs; relative --out paths are placed here.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Global {
    fn out(&self, path: &Path) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        let p = if path.is_relative() {
            self.out_dir.join(path)
        } else {
            path.to_path_buf()
        };
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(p)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load a matrix, filter cells and genes, optionally normalize, save.
    Ingest(IngestArgs),
    /// Per-gene mean, sd and zero fraction, with binned curves.
    Stats(StatsArgs),
    /// Compare two matrices over the same genes and cells.
    Compare(CompareArgs),
    /// Poisson-Gamma semi-synthetic counts from a reference.
    Simulate(SimulateArgs),
    /// Principal components of a matrix.
    Pca(PcaArgs),
    /// Exact two-dimensional tSNE of an embedding.
    Embed(EmbedArgs),
    /// Hierarchical clustering of an embedding cut into k clusters.
    Cluster(ClusterArgs),
    /// Agreement between predicted and reference labels.
    Evaluate(EvaluateArgs),
    /// Bootstrap clustering benchmark over several matrices.
    Bench(BenchArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000.0)]
    min_cell_total: f64,
    #[arg(long, default_value_t = 0.1)]
    min_gene_fraction: f64,
    /// Keep all cells and genes.
    #[arg(long)]
    no_filter: bool,
    /// Also apply library-size normalization and log1p.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Output name prefix.
    #[arg(long, default_value = "stats")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    other: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value = "compare")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    gamma_shape: f64,
    #[arg(long, default_value_t = 0.1)]
    gamma_scale: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PcaArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 10)]
    components: usize,
    /// Scale genes to unit variance before the decomposition.
    #[arg(long)]
    scale: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value = "ward")]
    linkage: Linkage,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Also write the contingency table (truth rows, predicted columns).
    #[arg(long)]
    contingency: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML file with bench settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cluster counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long)]
    pcs: Option<usize>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    linkage: Option<Linkage>,
    /// Compute PCA once on all cells instead of per replicate.
    #[arg(long)]
    fixed_pcs: bool,
    /// Candidate matrix as name=path; repeatable.
    #[arg(long = "dataset", value_parser = parse_pair)]
    datasets: Vec<(String, PathBuf)>,
    /// Reference labels used for every k without its own file.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Reference labels for one k, as k=path; repeatable.
    #[arg(long = "truth-k", value_parser = parse_pair)]
    truth_k: Vec<(String, PathBuf)>,
}

fn parse_pair(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() && !v.is_empty() => Ok((k.to_string(), PathBuf::from(v))),
        _ => Err(format!("expected name=path, got {s:?}")),
    }
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.global.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.threads)
            .build_global()
            .context("configuring thread pool")?;
    }
    let g = &cli.global;
    match cli.command {
        Command::Ingest(a) => ingest(g, a),
        Command::Stats(a) => stats(g, a),
        Command::Compare(a) => compare(g, a),
        Command::Simulate(a) => simulate(g, a),
        Command::Pca(a) => run_pca(g, a),
        Command::Embed(a) => embed(g, a),
        Command::Cluster(a) => cluster(g, a),
        Command::Evaluate(a) => run_evaluate(g, a),
        Command::Bench(a) => run_bench(g, a),
    }
}

fn load(path: &Path) -> Result<ExpressionMatrix> {
    io::load_matrix(path).with_context(|| format!("loading {}", path.display()))
}

fn ingest(g: &Global, a: IngestArgs) -> Result<()> {
    let mut m = load(&a.input)?;
    info!("loaded {} genes x {} cells ({})", m.n_genes(), m.n_cells(), m.layer());
    if !a.no_filter {
        let t = FilterThresholds {
            min_cell_total: a.min_cell_total,
            min_gene_nonzero_fraction: a.min_gene_fraction,
        };
        m = filter_reference(&m, t)?;
    }
    if a.normalize {
        m = normalize(&m)?;
    }
    let out = g.out(&a.out)?;
    io::save_matrix(&m, &out)?;
    println!(
        "{} genes x {} cells ({}) -> {}",
        m.n_genes(),
        m.n_cells(),
        m.layer(),
        out.display()
    );
    Ok(())
}

fn curve_doc(c: &BinnedCurve, excluded: &[String]) -> serde_json::Value {
    json!({
        "stat": c.stat,
        "bin_edges": c.bin_edges,
        "bin_centers": c.bin_centers,
        "y_values": c.y_values,
        "bin_counts": c.bin_counts,
        "excluded_genes": excluded,
    })
}

fn write_summaries(path: &Path, s: &[GeneSummary]) -> Result<()> {
    let mut text = String::from("gene_id\tmean\tsd\tzero_fraction\n");
    for g in s {
        text.push_str(&format!("{}\t{}\t{}\t{}\n", g.gene_id, g.mean, g.sd, g.zero_fraction));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn stats(g: &Global, a: StatsArgs) -> Result<()> {
    let m = load(&a.input)?;
    let s = gene_summaries(&m)?;
    let prefix = g.out(&a.out)?;
    write_summaries(&with_suffix(&prefix, ".genes.tsv"), &s)?;
    let doc = json!({
        "layer": m.layer(),
        "curves": [
            curve_doc(&binned_curve(&s, CurveStat::Sd, a.bins)?, &[]),
            curve_doc(&binned_curve(&s, CurveStat::ZeroFraction, a.bins)?, &[]),
        ],
        "histograms": [
            curve_doc(&summary_histogram(&s, SummaryStat::Mean, a.bins)?, &[]),
            curve_doc(&summary_histogram(&s, SummaryStat::Sd, a.bins)?, &[]),
            curve_doc(&summary_histogram(&s, SummaryStat::ZeroFraction, a.bins)?, &[]),
        ],
    });
    io::write_json(&with_suffix(&prefix, ".json"), &doc)?;
    println!(
        "{} genes summarized -> {}.{{genes.tsv,json}}",
        s.len(),
        prefix.display()
    );
    Ok(())
}

fn compare(g: &Global, a: CompareArgs) -> Result<()> {
    let r = load(&a.reference)?;
    let o = load(&a.other)?;
    let sr = gene_summaries(&r)?;
    let so = gene_summaries(&o)?;
    let r2 = per_gene_r2(&r, &o)?;
    let mut curves = Vec::new();
    for stat in [CurveStat::Sd, CurveStat::ZeroFraction] {
        let cr = binned_curve(&sr, stat, a.bins)?;
        let co = binned_curve_with_edges(&so, stat, &cr.bin_edges)?;
        curves.push(json!({
            "reference": curve_doc(&cr, &r2.excluded_genes),
            "other": curve_doc(&co, &r2.excluded_genes),
        }));
    }
    let prefix = g.out(&a.out)?;
    let mut text = String::from("gene_id\tr2\n");
    for (id, v) in r.gene_ids().iter().zip(&r2.per_gene) {
        match v {
            Some(v) => text.push_str(&format!("{id}\t{v}\n")),
            None => text.push_str(&format!("{id}\tNA\n")),
        }
    }
    let r2_path = with_suffix(&prefix, ".r2.tsv");
    fs::write(&r2_path, text).with_context(|| format!("writing {}", r2_path.display()))?;
    io::write_json(
        &with_suffix(&prefix, ".json"),
        &json!({
            "mean_r2": r2.mean_r2,
            "excluded_genes": r2.excluded_genes,
            "curves": curves,
        }),
    )?;
    println!(
        "mean R2 {:.4} over {} genes",
        r2.mean_r2,
        r2.per_gene.iter().flatten().count()
    );
    Ok(())
}

fn simulate(g: &Global, a: SimulateArgs) -> Result<()> {
    let reference = load(&a.reference)?;
    let cfg = SynthConfig {
        gamma_shape: a.gamma_shape,
        gamma_scale: a.gamma_scale,
        seed: g.seed,
    };
    let syn = generate(&reference, &cfg)?;
    let out = g.out(&a.out)?;
    io::save_matrix(&syn.counts, &out)?;
    io::write_json(&io::sidecar_path(&out), &syn.provenance)?;
    println!(
        "{} genes x {} cells -> {}",
        syn.counts.n_genes(),
        syn.counts.n_cells(),
        out.display()
    );
    Ok(())
}

fn run_pca(g: &Global, a: PcaArgs) -> Result<()> {
    let mut m = load(&a.input)?;
    if m.layer() != Layer::Normalized {
        info!("normalizing with {NORMALIZATION_ID}");
        m = normalize(&m)?;
    }
    let opts = PcaOptions {
        scale: a.scale,
        seed: g.seed,
        ..PcaOptions::new(a.components)
    };
    let p = pca_with(&m, &opts)?;
    let out = g.out(&a.out)?;
    io::save_embedding(&p.embedding, &out)?;
    println!(
        "{} components in {} iterations -> {}",
        a.components,
        p.iterations,
        out.display()
    );
    Ok(())
}

fn embed(g: &Global, a: EmbedArgs) -> Result<()> {
    let e = io::load_embedding(&a.input)?;
    let cfg = TsneConfig {
        perplexity: a.perplexity,
        n_iter: a.iterations,
        seed: g.seed,
        ..TsneConfig::default()
    };
    let r = tsne(&e, &cfg)?;
    let out = g.out(&a.out)?;
    io::save_embedding(&r.embedding, &out)?;
    println!("final KL {:.6} -> {}", r.final_kl, out.display());
    Ok(())
}

fn cluster(g: &Global, a: ClusterArgs) -> Result<()> {
    let e = io::load_embedding(&a.input)?;
    let d = linkage(&e, a.linkage)?;
    let p = cut(&d, a.k)?;
    let out = g.out(&a.out)?;
    io::save_labels(&out, e.cell_ids(), p.labels(), "cell_id\tcluster")?;
    println!(
        "{} cells in {} clusters ({}) -> {}",
        p.len(),
        p.k(),
        a.linkage,
        out.display()
    );
    Ok(())
}

fn run_evaluate(g: &Global, a: EvaluateArgs) -> Result<()> {
    let truth = io::load_annotation(&a.truth, AnnotationLevel::Major)?;
    let pred = io::load_annotation(&a.pred, AnnotationLevel::Major)?.aligned_to(truth.cell_ids())?;
    let (tp, tnames) = Partition::from_labels(truth.labels());
    let (pp, pnames) = Partition::from_labels(pred.labels());
    let table = contingency(&tp, &pp)?.with_names(tnames, pnames)?;
    let report = evaluate_table(&table)?;
    io::write_json(&g.out(&a.out)?, &report)?;
    if let Some(path) = &a.contingency {
        let path = g.out(path)?;
        fs::write(&path, table.to_tsv()).with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "ari {:.4}  jaccard {:.4}  nmi {:.4}  purity {:.4}  (n = {})",
        report.ari, report.jaccard, report.nmi, report.purity, report.n
    );
    Ok(())
}

fn run_bench(g: &Global, a: BenchArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => BenchConfig::from_file(p)?,
        None => BenchConfig::default(),
    };
    cfg.seed = g.seed;
    cfg.threads = g.threads;
    if let Some(k) = a.k {
        cfg.k_values = k;
    }
    if let Some(n) = a.pcs {
        cfg.n_pcs = n;
    }
    if let Some(b) = a.bootstrap {
        cfg.n_bootstrap = b;
    }
    if let Some(l) = a.linkage {
        cfg.linkage = l;
    }
    cfg.fixed_pcs |= a.fixed_pcs;
    cfg.datasets.extend(a.datasets);
    if let Some(t) = a.truth {
        cfg.truth.insert(DEFAULT_TRUTH_KEY.to_string(), t);
    }
    for (k, p) in a.truth_k {
        k.parse::<usize>()
            .with_context(|| format!("--truth-k key {k:?} is not a cluster count"))?;
        cfg.truth.insert(k, p);
    }
    if cfg.datasets.is_empty() {
        bail!("no datasets: pass --dataset name=path or list them in the config");
    }
    let input = bench::load_inputs(&cfg)?;
    let result = bench::run_loaded(&input, &cfg, bench::Predictor::Cluster)?;
    fs::create_dir_all(&g.out_dir)?;
    bench::write_outputs(&g.out_dir, &result, &bench::provenance(&cfg, &input))?;

    let mut medians: BTreeMap<(&str, usize), Vec<f64>> = BTreeMap::new();
    for e in &result.summary {
        medians.entry((&e.dataset, e.k)).or_default().push(e.stats.median);
    }
    println!(
        "{:<20} {:>4} {:>8} {:>8} {:>8} {:>8}",
        "dataset", "k", "ari", "jaccard", "nmi", "purity"
    );
    for ((d, k), m) in medians {
        println!("{d:<20} {k:>4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}", m[0], m[1], m[2], m[3]);
    }
    println!("results in {}", g.out_dir.display());
    Ok(())
}
