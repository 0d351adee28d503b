//! Agreement between a predicted partition and reference labels.
//!
//! All four measures are computed from one contingency table with
//! closed-form pair counts, so cost is O(rows × cols) after tabulation.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hclust::Partition;

/// Reported with every metric set.
pub const NMI_NORMALIZATION: &str = "arithmetic";

/// Cross-tabulation: rows are truth classes, columns predicted clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    counts: Vec<u64>,
    rows: usize,
    cols: usize,
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    n: u64,
}

impl ContingencyTable {
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.cols + j]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j)).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// Replace the default numeric row/column names.
    pub fn with_names(mut self, row_names: Vec<String>, col_names: Vec<String>) -> Result<Self> {
        if row_names.len() != self.rows || col_names.len() != self.cols {
            return Err(Error::ShapeMismatch("name count does not match table".into()));
        }
        self.row_names = row_names;
        self.col_names = col_names;
        Ok(self)
    }

    /// Tab-separated text: header of predicted cluster names, one row per
    /// truth class.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("truth\\pred");
        for c in &self.col_names {
            let _ = write!(out, "\t{c}");
        }
        out.push('\n');
        for i in 0..self.rows {
            out.push_str(&self.row_names[i]);
            for j in 0..self.cols {
                let _ = write!(out, "\t{}", self.get(i, j));
            }
            out.push('\n');
        }
        out
    }
}

pub fn contingency(truth: &Partition, pred: &Partition) -> Result<ContingencyTable> {
    if truth.len() != pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "truth has {} items, prediction {}",
            truth.len(),
            pred.len()
        )));
    }
    let (rows, cols) = (truth.k(), pred.k());
    let mut counts = vec![0u64; rows * cols];
    for (&t, &p) in truth.labels().iter().zip(pred.labels()) {
        counts[t * cols + p] += 1;
    }
    Ok(ContingencyTable {
        counts,
        rows,
        cols,
        row_names: (0..rows).map(|i| i.to_string()).collect(),
        col_names: (0..cols).map(|j| j.to_string()).collect(),
        n: truth.len() as u64,
    })
}

fn choose2(x: u64) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

struct PairCounts {
    /// Σ C(n_ij, 2): pairs together in both.
    both: f64,
    /// Σ C(a_i, 2): pairs together in truth.
    truth: f64,
    /// Σ C(b_j, 2): pairs together in prediction.
    pred: f64,
    total: f64,
}

fn pair_counts(t: &ContingencyTable) -> PairCounts {
    PairCounts {
        both: t.counts.iter().map(|&x| choose2(x)).sum(),
        truth: t.row_sums().into_iter().map(choose2).sum(),
        pred: t.col_sums().into_iter().map(choose2).sum(),
        total: choose2(t.n),
    }
}

fn need_pairs(t: &ContingencyTable) -> Result<()> {
    if t.n < 2 {
        return Err(Error::InvalidArgument(format!(
            "pair-counting needs n >= 2, got {}",
            t.n
        )));
    }
    Ok(())
}

/// Hubert-Arabie adjusted Rand index; 1 when both partitions are trivial in
/// the same way (expected index equals its maximum).
pub fn ari(t: &ContingencyTable) -> Result<f64> {
    need_pairs(t)?;
    Ok(ari_inner(&pair_counts(t)).0)
}

fn ari_inner(pc: &PairCounts) -> (f64, bool) {
    let expected = pc.truth * pc.pred / pc.total;
    let max = 0.5 * (pc.truth + pc.pred);
    if max == expected {
        (1.0, true)
    } else {
        ((pc.both - expected) / (max - expected), false)
    }
}

/// Pair-counting Jaccard `N11 / (N11 + N10 + N01)`; 1 when no pair is
/// together in either partition.
pub fn jaccard_pairs(t: &ContingencyTable) -> Result<f64> {
    need_pairs(t)?;
    Ok(jaccard_inner(&pair_counts(t)))
}

fn jaccard_inner(pc: &PairCounts) -> f64 {
    let n11 = pc.both;
    let n10 = pc.truth - pc.both;
    let n01 = pc.pred - pc.both;
    let denom = n11 + n10 + n01;
    if denom == 0.0 {
        1.0
    } else {
        n11 / denom
    }
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter()
        .filter(|&&x| x > 0)
        .map(|&x| {
            let p = x as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the mean of the two entropies (natural log).
/// Both entropies zero gives 1; exactly one zero gives 0.
pub fn nmi(t: &ContingencyTable) -> Result<f64> {
    if t.n < 1 {
        return Err(Error::InvalidArgument("nmi needs at least one item".into()));
    }
    Ok(nmi_inner(t).0)
}

fn nmi_inner(t: &ContingencyTable) -> (f64, bool) {
    let n = t.n as f64;
    let a = t.row_sums();
    let b = t.col_sums();
    let (ht, hp) = (entropy(&a, n), entropy(&b, n));
    if ht == 0.0 && hp == 0.0 {
        return (1.0, true);
    }
    if ht == 0.0 || hp == 0.0 {
        return (0.0, false);
    }
    let mut mi = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            let x = t.get(i, j);
            if x > 0 {
                let x = x as f64;
                mi += x / n * (n * x / (ai as f64 * bj as f64)).ln();
            }
        }
    }
    ((mi / (0.5 * (ht + hp))).clamp(0.0, 1.0), false)
}

/// Fraction of items in their predicted cluster's majority truth class.
pub fn purity(t: &ContingencyTable) -> Result<f64> {
    if t.n < 1 {
        return Err(Error::InvalidArgument("purity needs at least one item".into()));
    }
    let majority: u64 = (0..t.cols)
        .map(|j| (0..t.rows).map(|i| t.get(i, j)).max().unwrap_or(0))
        .sum();
    Ok(majority as f64 / t.n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegenerateFlag {
    /// A convention value was returned because both partitions are trivial.
    BothTrivial,
    /// The prediction has at least one single-item cluster.
    SingletonClusters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ari: f64,
    pub jaccard: f64,
    pub nmi: f64,
    pub purity: f64,
    pub n: usize,
    pub degenerate_flags: BTreeSet<DegenerateFlag>,
    pub nmi_normalization: String,
}

/// All four measures from one table.
pub fn evaluate(truth: &Partition, pred: &Partition) -> Result<MetricReport> {
    let t = contingency(truth, pred)?;
    evaluate_table(&t)
}

pub fn evaluate_table(t: &ContingencyTable) -> Result<MetricReport> {
    need_pairs(t)?;
    let pc = pair_counts(t);
    let (ari, ari_conv) = ari_inner(&pc);
    let (nmi, nmi_conv) = nmi_inner(t);
    let mut degenerate_flags = BTreeSet::new();
    if ari_conv || nmi_conv {
        degenerate_flags.insert(DegenerateFlag::BothTrivial);
    }
    if t.col_sums().contains(&1) {
        degenerate_flags.insert(DegenerateFlag::SingletonClusters);
    }
    Ok(MetricReport {
        ari,
        jaccard: jaccard_inner(&pc),
        nmi,
        purity: purity(t)?,
        n: t.n as usize,
        degenerate_flags,
        nmi_normalization: NMI_NORMALIZATION.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn part(labels: &[usize]) -> Partition {
        Partition::from_labels(labels).0
    }

    #[test]
    fn contingency_examples() {
        let t = contingency(&part(&[0, 0, 1, 1]), &part(&[0, 1, 0, 1])).unwrap();
        assert_eq!((t.rows(), t.cols()), (2, 2));
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(t.get(i, j), 1);
            }
        }
        let t = contingency(&part(&[0, 1, 2, 1]), &part(&[0, 1, 2, 1])).unwrap();
        assert_eq!(t.get(1, 1), 2);
        assert_eq!(t.get(0, 1), 0);
        assert!(contingency(&part(&[0, 1]), &part(&[0])).is_err());
    }

    #[test]
    fn worked_case() {
        let t = contingency(&part(&[1, 1, 2, 2]), &part(&[1, 2, 1, 2])).unwrap();
        let r = evaluate_table(&t).unwrap();
        assert!((r.ari + 0.5).abs() < 1e-15);
        assert_eq!(r.jaccard, 0.0);
        assert!(r.nmi.abs() < 1e-15);
        assert_eq!(r.purity, 0.5);
    }

    #[test]
    fn identical_partitions_score_one() {
        let p = part(&[0, 0, 1, 2, 2, 2]);
        let r = evaluate(&p, &p).unwrap();
        assert_eq!((r.ari, r.jaccard, r.purity), (1.0, 1.0, 1.0));
        assert!((r.nmi - 1.0).abs() < 1e-15);
        assert!(r.degenerate_flags.contains(&DegenerateFlag::SingletonClusters));
    }

    #[test]
    fn degenerate_conventions() {
        let one = part(&[0, 0, 0]);
        let r = evaluate(&one, &one).unwrap();
        assert_eq!((r.ari, r.nmi), (1.0, 1.0));
        assert!(r.degenerate_flags.contains(&DegenerateFlag::BothTrivial));

        let single = part(&[0, 1, 2, 3]);
        let t = contingency(&single, &single).unwrap();
        assert_eq!(jaccard_pairs(&t).unwrap(), 1.0);
        assert_eq!(ari(&t).unwrap(), 1.0);

        // one partition trivial, the other not
        let t = contingency(&part(&[0, 0, 0, 0]), &part(&[0, 0, 1, 1])).unwrap();
        assert_eq!(nmi(&t).unwrap(), 0.0);

        let t = contingency(&part(&[0]), &part(&[0])).unwrap();
        assert!(ari(&t).is_err());
        assert!(jaccard_pairs(&t).is_err());
        assert_eq!(purity(&t).unwrap(), 1.0);
    }

    #[test]
    fn purity_examples() {
        let t = contingency(&part(&[1, 2, 2, 2]), &part(&[1, 1, 2, 2])).unwrap();
        assert_eq!(purity(&t).unwrap(), 0.75);
        let t = contingency(&part(&[0, 0, 1, 1, 0]), &part(&[0, 1, 2, 3, 4])).unwrap();
        assert_eq!(purity(&t).unwrap(), 1.0);
    }

    #[test]
    fn tsv_orientation() {
        let t = contingency(&part(&[0, 0, 1]), &part(&[0, 1, 1]))
            .unwrap()
            .with_names(vec!["neuron".into(), "glia".into()], vec!["c0".into(), "c1".into()])
            .unwrap();
        assert_eq!(t.to_tsv(), "truth\\pred\tc0\tc1\nneuron\t1\t1\nglia\t0\t1\n");
    }

    fn labels(n: usize) -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(0usize..5, n)
    }

    proptest! {
        #[test]
        fn relabeling_invariance(pair in (2usize..30).prop_flat_map(|n| (labels(n), labels(n)))) {
            let (a, b) = pair;
            let r = evaluate(&part(&a), &part(&b)).unwrap();
            let renamed: Vec<usize> = b.iter().map(|x| 10 - x).collect();
            let s = evaluate(&part(&a), &part(&renamed)).unwrap();
            prop_assert_eq!(r, s);
        }

        #[test]
        fn purity_non_decreasing_under_splits(pair in (2usize..30).prop_flat_map(|n| (labels(n), labels(n), 0usize..5))) {
            let (truth, pred, target) = pair;
            let before = purity(&contingency(&part(&truth), &part(&pred)).unwrap()).unwrap();
            // split cluster `target` by parity of item index
            let split: Vec<usize> = pred.iter().enumerate()
                .map(|(i, &p)| if p == target && i % 2 == 1 { 99 } else { p })
                .collect();
            let after = purity(&contingency(&part(&truth), &part(&split)).unwrap()).unwrap();
            prop_assert!(after >= before);
        }

        #[test]
        fn ranges(pair in (2usize..30).prop_flat_map(|n| (labels(n), labels(n)))) {
            let r = evaluate(&part(&pair.0), &part(&pair.1)).unwrap();
            prop_assert!((-1.0..=1.0).contains(&r.ari));
            prop_assert!((0.0..=1.0).contains(&r.jaccard));
            prop_assert!((0.0..=1.0).contains(&r.nmi));
            prop_assert!(r.purity > 0.0 && r.purity <= 1.0);
        }
    }
}
