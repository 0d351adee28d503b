//! Agglomerative hierarchical clustering by the nearest-neighbor-chain
//! algorithm, and cutting the resulting dendrogram into `k` clusters.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dimred::Embedding;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    /// Lance-Williams Ward update on squared Euclidean distances.
    #[default]
    Ward,
    /// UPGMA on Euclidean distances.
    Average,
    /// Farthest neighbor on Euclidean distances.
    Complete,
}

impl Linkage {
    pub fn as_str(self) -> &'static str {
        match self {
            Linkage::Ward => "ward",
            Linkage::Average => "average",
            Linkage::Complete => "complete",
        }
    }

    /// Distance between `k` and the union of `i` and `j`.
    #[inline]
    pub fn update(self, d_ki: f64, d_kj: f64, d_ij: f64, n_i: f64, n_j: f64, n_k: f64) -> f64 {
        match self {
            Linkage::Ward => ((n_i + n_k) * d_ki + (n_j + n_k) * d_kj - n_k * d_ij) / (n_i + n_j + n_k),
            Linkage::Average => (n_i * d_ki + n_j * d_kj) / (n_i + n_j),
            Linkage::Complete => d_ki.max(d_kj),
        }
    }

    /// Initial point-to-point dissimilarity from a squared distance.
    #[inline]
    pub fn initial(self, squared: f64) -> f64 {
        match self {
            Linkage::Ward => squared,
            Linkage::Average | Linkage::Complete => squared.sqrt(),
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ward" => Ok(Linkage::Ward),
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            other => Err(Error::InvalidArgument(format!("unknown linkage {other:?}"))),
        }
    }
}

/// One agglomeration. Leaves are nodes `0..n`; merge `i` creates node `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    pub leaf_count: usize,
    pub linkage: Linkage,
}

/// Cluster labels `0..k`, every cluster non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Validates that labels cover exactly `0..k`.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |&m| m + 1);
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("partition labels must cover 0..k".into()));
        }
        Ok(Partition { labels, k })
    }

    /// Canonical relabeling of arbitrary labels: ids are assigned in order of
    /// first appearance. Also returns the original label for each id.
    pub fn from_labels<L: Clone + Eq + std::hash::Hash>(raw: &[L]) -> (Self, Vec<L>) {
        let mut ids: HashMap<&L, usize> = HashMap::new();
        let mut names = Vec::new();
        let labels = raw
            .iter()
            .map(|l| {
                *ids.entry(l).or_insert_with(|| {
                    names.push(l.clone());
                    names.len() - 1
                })
            })
            .collect();
        (Partition { labels, k: names.len() }, names)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    n * i - i * (i + 1) / 2 + (j - i - 1)
}

pub fn ward_linkage(points: &Embedding) -> Result<Dendrogram> {
    linkage(points, Linkage::Ward)
}

/// Agglomerate all points. Ties in the nearest-neighbor search go to the
/// chain predecessor, then to the smallest index; merges are reported in
/// non-decreasing height order with node ids assigned in that order.
pub fn linkage(points: &Embedding, method: Linkage) -> Result<Dendrogram> {
    let n = points.n_points();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 points, got {n}")));
    }
    if points.coords().iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite coordinate".into()));
    }
    let mut dist = vec![0.0; n * (n - 1) / 2];
    for i in 0..n {
        let pi = points.point(i);
        for j in (i + 1)..n {
            let pj = points.point(j);
            let sq: f64 = pi.iter().zip(pj).map(|(a, b)| (a - b) * (a - b)).sum();
            dist[condensed_index(n, i, j)] = method.initial(sq);
        }
    }

    let mut size = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    // (surviving slot, absorbed slot, height) in discovery order
    let mut raw: Vec<(usize, usize, f64)> = Vec::with_capacity(n - 1);

    while raw.len() < n - 1 {
        if chain.is_empty() {
            chain.push(active[0]);
        }
        let (a, b) = loop {
            let a = *chain.last().unwrap();
            let prev = if chain.len() >= 2 {
                Some(chain[chain.len() - 2])
            } else {
                None
            };
            // `active` is ascending and only a strict improvement replaces
            // the predecessor, which gives the tie order
            let mut best = prev;
            let mut best_d = prev.map_or(f64::INFINITY, |p| dist[condensed_index(n, a, p)]);
            for &x in &active {
                if x == a {
                    continue;
                }
                let d = dist[condensed_index(n, a, x)];
                if d < best_d {
                    best_d = d;
                    best = Some(x);
                }
            }
            let c = best.expect("at least two active clusters");
            if Some(c) == prev {
                chain.pop();
                chain.pop();
                break (a, c);
            }
            chain.push(c);
        };

        // merge into the smaller slot index
        let (keep, gone) = if a < b { (a, b) } else { (b, a) };
        let d_ab = dist[condensed_index(n, keep, gone)];
        let (n_keep, n_gone) = (size[keep] as f64, size[gone] as f64);
        active.retain(|&x| x != gone);
        for &x in &active {
            if x == keep {
                continue;
            }
            let d_kx = dist[condensed_index(n, keep, x)];
            let d_gx = dist[condensed_index(n, gone, x)];
            dist[condensed_index(n, keep, x)] = method.update(d_kx, d_gx, d_ab, n_keep, n_gone, size[x] as f64);
        }
        size[keep] += size[gone];
        raw.push((keep, gone, d_ab));
    }

    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&i, &j| raw[i].2.total_cmp(&raw[j].2).then(i.cmp(&j)));

    let mut uf = UnionFind::new(n);
    let mut node_of_root: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);
    for (step, &i) in order.iter().enumerate() {
        let (x, y, height) = raw[i];
        let (rx, ry) = (uf.find(x), uf.find(y));
        let (na, nb) = (node_of_root[rx], node_of_root[ry]);
        let root = uf.union(rx, ry);
        node_of_root[root] = n + step;
        merges.push(Merge {
            a: na.min(nb),
            b: na.max(nb),
            height,
            size: uf.size[root],
        });
    }
    Ok(Dendrogram {
        merges,
        leaf_count: n,
        linkage: method,
    })
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (big, small) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        big
    }
}

/// Undo the last `k − 1` merges. Labels follow the order of each cluster's
/// smallest leaf index.
pub fn cut(d: &Dendrogram, k: usize) -> Result<Partition> {
    let n = d.leaf_count;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must be in 1..={n}, got {k}")));
    }
    // node id -> representative leaf
    let mut rep: Vec<usize> = (0..n).collect();
    let mut uf = UnionFind::new(n);
    for m in &d.merges[..n - k] {
        let (ra, rb) = (uf.find(rep[m.a]), uf.find(rep[m.b]));
        uf.union(ra, rb);
        rep.push(rep[m.a]);
    }
    let mut label_of_root = HashMap::new();
    let labels = (0..n)
        .map(|leaf| {
            let root = uf.find(leaf);
            let next = label_of_root.len();
            *label_of_root.entry(root).or_insert(next)
        })
        .collect();
    Partition::new(labels)
}
