//! Readers and writers for matrices, annotations, labels and embeddings.
//!
//! Floats are written with Rust's shortest round-trip formatting, so any
//! finite value survives save → load bit-exactly.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::dimred::{Embedding, EmbeddingMeta};
use crate::error::{Error, Result};
use crate::matrix::{AnnotationLevel, CellAnnotation, ExpressionMatrix, Layer};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    open(path)?
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

/// One id per line; only the first tab-separated field is used so 10x-style
/// `features.tsv` files work. Blank trailing lines are ignored.
pub fn read_ids(path: &Path) -> Result<Vec<String>> {
    let mut ids: Vec<String> = read_lines(path)?
        .into_iter()
        .map(|l| l.trim_end_matches('\r').split('\t').next().unwrap_or("").to_string())
        .collect();
    while ids.last().is_some_and(|s| s.is_empty()) {
        ids.pop();
    }
    Ok(ids)
}

fn write_ids(path: &Path, ids: &[String]) -> Result<()> {
    let mut w = create(path)?;
    for id in ids {
        writeln!(w, "{id}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_layer(tag: &str) -> Option<Layer> {
    match tag.trim() {
        "raw_counts" => Some(Layer::RawCounts),
        "count_scale" => Some(Layer::CountScale),
        "normalized" => Some(Layer::Normalized),
        _ => None,
    }
}

/// Infer the layer of freshly parsed values: integers are raw counts,
/// anything else is count-scale.
fn inferred_layer(integer_field: bool, all_integral: bool) -> Layer {
    if integer_field || all_integral {
        Layer::RawCounts
    } else {
        Layer::CountScale
    }
}

/// Read a Matrix Market coordinate file (genes × cells, 1-based) with
/// companion gene and cell id files.
pub fn load_mtx(path: &Path, genes_path: &Path, cells_path: &Path) -> Result<ExpressionMatrix> {
    let reader = open(path)?;
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::MalformedHeader("empty file".into())),
    };
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    let integer_field = match tokens.as_slice() {
        [banner, obj, fmt, field, sym]
            if banner == "%%matrixmarket" && obj == "matrix" && fmt == "coordinate" && sym == "general" =>
        {
            match field.as_str() {
                "integer" => true,
                "real" => false,
                other => return Err(Error::MalformedHeader(format!("unsupported field {other}"))),
            }
        }
        _ => return Err(Error::MalformedHeader(header)),
    };

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut declared_layer = None;
    let mut triplets = Vec::new();
    let mut all_integral = true;
    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('%') {
            if let Some(tag) = comment.trim().strip_prefix("layer:") {
                declared_layer = parse_layer(tag);
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match dims {
            None => {
                let parsed: Option<Vec<usize>> = fields.iter().map(|f| f.parse().ok()).collect();
                match parsed.as_deref() {
                    Some(&[r, c, n]) => dims = Some((r, c, n)),
                    _ => return Err(Error::MalformedHeader(format!("bad size line: {line}"))),
                }
            }
            Some((rows, cols, _)) => {
                if fields.len() != 3 {
                    return Err(Error::parse(path, lineno + 1, "expected `row col value`"));
                }
                let row: usize = fields[0]
                    .parse()
                    .map_err(|_| Error::parse(path, lineno + 1, "bad row index"))?;
                let col: usize = fields[1]
                    .parse()
                    .map_err(|_| Error::parse(path, lineno + 1, "bad column index"))?;
                let value: f64 = if integer_field {
                    fields[2]
                        .parse::<i64>()
                        .map_err(|_| Error::parse(path, lineno + 1, "bad integer value"))? as f64
                } else {
                    fields[2]
                        .parse()
                        .map_err(|_| Error::parse(path, lineno + 1, "bad real value"))?
                };
                if row == 0 || col == 0 || row > rows || col > cols {
                    return Err(Error::IndexOutOfRange { row, col, rows, cols });
                }
                all_integral &= value.fract() == 0.0;
                triplets.push((row - 1, col - 1, value));
            }
        }
    }
    let (rows, cols, declared) = dims.ok_or_else(|| Error::MalformedHeader("missing size line".into()))?;
    if triplets.len() != declared {
        return Err(Error::EntryCountMismatch {
            declared,
            found: triplets.len(),
        });
    }
    let gene_ids = read_ids(genes_path)?;
    let cell_ids = read_ids(cells_path)?;
    if gene_ids.len() != rows || cell_ids.len() != cols {
        return Err(Error::ShapeMismatch(format!(
            "header declares {rows}x{cols}, id files list {} genes and {} cells",
            gene_ids.len(),
            cell_ids.len()
        )));
    }
    let layer = declared_layer.unwrap_or_else(|| inferred_layer(integer_field, all_integral));
    ExpressionMatrix::from_triplets(gene_ids, cell_ids, triplets, layer)
}

/// Write Matrix Market (integer field for raw counts, real otherwise) plus
/// the two id files. Only non-zero entries are listed.
pub fn save_mtx(m: &ExpressionMatrix, path: &Path, genes_path: &Path, cells_path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let field = if m.layer() == Layer::RawCounts {
        "integer"
    } else {
        "real"
    };
    let io = |e| Error::io(path, e);
    writeln!(w, "%%MatrixMarket matrix coordinate {field} general").map_err(io)?;
    writeln!(w, "% layer: {}", m.layer()).map_err(io)?;
    writeln!(w, "{} {} {}", m.n_genes(), m.n_cells(), m.nnz()).map_err(io)?;
    let mut result = Ok(());
    for g in 0..m.n_genes() {
        m.for_each_nonzero(g, |c, v| {
            if result.is_ok() {
                result = writeln!(w, "{} {} {}", g + 1, c + 1, v);
            }
        });
    }
    result.map_err(io)?;
    w.flush().map_err(io)?;
    write_ids(genes_path, m.gene_ids())?;
    write_ids(cells_path, m.cell_ids())
}

/// Companion id file paths for `X.mtx`: `X.genes.txt` and `X.cells.txt`.
pub fn mtx_companions(path: &Path) -> (PathBuf, PathBuf) {
    let stem = path.with_extension("");
    let base = stem.to_string_lossy();
    (
        PathBuf::from(format!("{base}.genes.txt")),
        PathBuf::from(format!("{base}.cells.txt")),
    )
}

/// Read a delimited gene × cell grid: first row holds cell ids (after a
/// corner field), first column holds gene ids. A corner field naming a layer
/// (`raw_counts`, `count_scale`, `normalized`) sets the layer; otherwise it is
/// inferred from the values.
pub fn load_csv(path: &Path, delimiter: char) -> Result<ExpressionMatrix> {
    let lines = read_lines(path)?;
    let mut rows = lines
        .iter()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.is_empty());
    let (_, header) = rows.next().ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let corner = header.split(delimiter).next().unwrap_or("");
    let declared_layer = parse_layer(corner);
    let cell_ids: Vec<String> = header.split(delimiter).skip(1).map(str::to_string).collect();
    let expected = cell_ids.len() + 1;

    let mut gene_ids = Vec::new();
    let mut values = Vec::new();
    let mut all_integral = true;
    for (lineno, line) in rows {
        let fields: Vec<&str> = line.split(delimiter).collect();
        if fields.len() != expected {
            return Err(Error::RaggedRow {
                line: lineno,
                found: fields.len(),
                expected,
            });
        }
        gene_ids.push(fields[0].to_string());
        for f in &fields[1..] {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("non-numeric value {f:?}")))?;
            all_integral &= v.fract() == 0.0;
            values.push(v);
        }
    }
    let layer = declared_layer.unwrap_or_else(|| inferred_layer(false, all_integral));
    ExpressionMatrix::from_dense(gene_ids, cell_ids, values, layer)
}

pub fn save_csv(m: &ExpressionMatrix, path: &Path, delimiter: char) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    write!(w, "{}", m.layer()).map_err(io)?;
    for c in m.cell_ids() {
        write!(w, "{delimiter}{c}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for g in 0..m.n_genes() {
        write!(w, "{}", m.gene_ids()[g]).map_err(io)?;
        for v in m.gene_row(g) {
            write!(w, "{delimiter}{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Load any supported matrix format, chosen by extension: `.mtx` (with
/// companions from [`mtx_companions`]), `.csv` (comma), `.tsv`/`.txt` (tab).
pub fn load_matrix(path: &Path) -> Result<ExpressionMatrix> {
    match extension(path).as_str() {
        "mtx" => {
            let (genes, cells) = mtx_companions(path);
            load_mtx(path, &genes, &cells)
        }
        "csv" => load_csv(path, ','),
        "tsv" | "txt" => load_csv(path, '\t'),
        other => Err(Error::InvalidArgument(format!(
            "unrecognized matrix extension {other:?} for {}",
            path.display()
        ))),
    }
}

/// Save by extension, mirroring [`load_matrix`].
pub fn save_matrix(m: &ExpressionMatrix, path: &Path) -> Result<()> {
    match extension(path).as_str() {
        "mtx" => {
            let (genes, cells) = mtx_companions(path);
            save_mtx(m, path, &genes, &cells)
        }
        "csv" => save_csv(m, path, ','),
        "tsv" | "txt" => save_csv(m, path, '\t'),
        other => Err(Error::InvalidArgument(format!(
            "unrecognized matrix extension {other:?} for {}",
            path.display()
        ))),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default()
}

fn split_pair(line: &str) -> Option<(&str, &str)> {
    let delim = if line.contains('\t') { '\t' } else { ',' };
    let mut it = line.splitn(2, delim);
    let a = it.next()?.trim();
    let b = it.next()?.trim();
    Some((a, b))
}

/// Read a two-column `cell_id → label` file (tab or comma). A header line
/// whose first field is `cell` or `cell_id` is skipped, as are `#` comments.
pub fn load_annotation(path: &Path, level: AnnotationLevel) -> Result<CellAnnotation> {
    let mut cells = Vec::new();
    let mut labels = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (cell, label) = split_pair(line).ok_or_else(|| Error::parse(path, i + 1, "expected two columns"))?;
        if cells.is_empty() && (cell == "cell_id" || cell == "cell") {
            continue;
        }
        if label.is_empty() {
            return Err(Error::parse(path, i + 1, "empty label"));
        }
        if !seen.insert(cell.to_string()) {
            return Err(Error::DuplicateId(cell.to_string()));
        }
        cells.push(cell.to_string());
        labels.push(label.to_string());
    }
    CellAnnotation::new(cells, labels, level)
}

/// Write `cell_id<TAB>label` with a header line.
pub fn save_labels<L: std::fmt::Display>(path: &Path, cell_ids: &[String], labels: &[L], header: &str) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "cell_id\t{header}").map_err(io)?;
    for (c, l) in cell_ids.iter().zip(labels) {
        writeln!(w, "{c}\t{l}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Sidecar metadata path: `coords.csv` → `coords.csv.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Write coordinates as comma-separated text plus a JSON metadata sidecar.
pub fn save_embedding(e: &Embedding, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |err| Error::io(path, err);
    let prefix = e.meta.method.axis_prefix();
    write!(w, "cell_id").map_err(io)?;
    for d in 0..e.dim() {
        write!(w, ",{prefix}{}", d + 1).map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (i, id) in e.cell_ids().iter().enumerate() {
        write!(w, "{id}").map_err(io)?;
        for v in e.point(i) {
            write!(w, ",{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)?;
    write_json(&sidecar_path(path), &e.meta)
}

/// Read coordinates; metadata comes from the sidecar when present.
pub fn load_embedding(path: &Path) -> Result<Embedding> {
    let lines = read_lines(path)?;
    let mut rows = lines
        .iter()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.is_empty());
    let (_, header) = rows.next().ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let dim = header.split(',').count() - 1;
    let mut cell_ids = Vec::new();
    let mut coords = Vec::new();
    for (lineno, line) in rows {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::RaggedRow {
                line: lineno,
                found: fields.len(),
                expected: dim + 1,
            });
        }
        cell_ids.push(fields[0].to_string());
        for f in &fields[1..] {
            coords.push(
                f.parse::<f64>()
                    .map_err(|_| Error::parse(path, lineno, format!("non-numeric value {f:?}")))?,
            );
        }
    }
    let sidecar = sidecar_path(path);
    let meta = if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        serde_json::from_str::<EmbeddingMeta>(&text).map_err(|e| Error::parse(&sidecar, e.line(), e.to_string()))?
    } else {
        EmbeddingMeta::external(dim)
    };
    if meta.dim != dim {
        return Err(Error::ShapeMismatch(format!(
            "sidecar says dim {}, file has {dim} columns",
            meta.dim
        )));
    }
    Embedding::new(cell_ids, coords, meta)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
