//! Deterministic random forest.
//!
//! Trees are CART classifiers grown with Gini impurity. At each node a random
//! subset of the retained features is examined (`floor(sqrt(d))` by default);
//! features that are constant at the node do not count toward that budget,
//! so a node only becomes a leaf when it is pure, hits `max_depth`, or no
//! retained feature separates its samples. Candidate thresholds are midpoints
//! between consecutive distinct values and rows with `x <= threshold` go left.
//!
//! Ties are broken toward the lowest index everywhere: the first threshold
//! within a feature, the lowest feature index across features, the lowest
//! class index when a leaf or the forest votes.
//!
//! Tree `i` draws from a ChaCha8 stream seeded with
//! `rng::derive_seed(config.seed, i)`, so training is reproducible bit for bit
//! and independent of thread scheduling.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// How many candidate features a split examines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitFeatures {
    /// `floor(sqrt(d))`, at least 1.
    #[default]
    Sqrt,
    All,
    Fixed(usize),
}

impl SplitFeatures {
    fn resolve(self, d: usize) -> usize {
        let m = match self {
            SplitFeatures::Sqrt => (d as f64).sqrt().floor() as usize,
            SplitFeatures::All => d,
            SplitFeatures::Fixed(m) => m,
        };
        m.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows every branch until it is pure or cannot be split.
    pub max_depth: Option<usize>,
    pub features_per_split: SplitFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 10, max_depth: None, features_per_split: SplitFeatures::Sqrt, bootstrap: true, seed: 0 }
    }
}

impl ForestConfig {
    pub fn with_trees(mut self, n: usize) -> Self {
        self.n_trees = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Gini decrease weighted by the node's share of the tree's samples.
        gain: f64,
    },
    Leaf {
        counts: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, row: &[f64]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { counts } => return counts,
            }
        }
    }

    /// Majority class of the leaf `row` falls in.
    pub fn vote(&self, row: &[f64]) -> usize {
        argmax_u32(self.leaf(row))
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

fn argmax_u32(v: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in v.iter().enumerate() {
        if c > v[best] {
            best = i;
        }
    }
    best
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate() {
        if p > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedForest {
    pub trees: Vec<Tree>,
    /// Class names, sorted; class index `i` is `labels[i]`.
    pub labels: Vec<String>,
    pub feature_mask: Vec<bool>,
    pub config: ForestConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportance {
    pub values: Vec<f64>,
    /// Set when no tree made a single split (all values are zero).
    pub degenerate: bool,
}

const MODEL_FORMAT: &str = "wearlab-forest";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    rng: String,
    n_features: usize,
    #[serde(flatten)]
    forest: TrainedForest,
}

fn check_input<S: AsRef<str>>(x: &[Vec<f64>], y: &[S]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Training(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let d = x[0].len();
    if let Some((i, r)) = x.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(Error::Training(format!("ragged rows: row {i} has {} values, row 0 has {d}", r.len())));
    }
    if let Some((i, _)) = x.iter().enumerate().find(|(_, r)| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Training(format!("row {i} contains a non-finite value")));
    }
    Ok(d)
}

/// Trains on every feature.
pub fn train<S: AsRef<str>>(x: &[Vec<f64>], y: &[S], cfg: &ForestConfig) -> Result<TrainedForest> {
    let d = check_input(x, y)?;
    train_masked(x, y, cfg, &vec![true; d])
}

/// Trains using only the features whose mask entry is true. Rows keep their
/// full width; the model reads only retained columns.
pub fn train_masked<S: AsRef<str>>(
    x: &[Vec<f64>],
    y: &[S],
    cfg: &ForestConfig,
    mask: &[bool],
) -> Result<TrainedForest> {
    let d = check_input(x, y)?;
    if cfg.n_trees == 0 {
        return Err(Error::Training("n_trees must be at least 1".into()));
    }
    if mask.len() != d {
        return Err(Error::Training(format!("mask has {} entries for {d} features", mask.len())));
    }
    let labels: Vec<String> =
        y.iter().map(|s| s.as_ref().to_string()).collect::<BTreeSet<_>>().into_iter().collect();
    let targets: Vec<usize> =
        y.iter().map(|s| labels.binary_search_by(|l| l.as_str().cmp(s.as_ref())).unwrap()).collect();
    let active: Vec<usize> = (0..d).filter(|&f| mask[f]).collect();
    // Column-major copy of the retained features.
    let columns: Vec<Vec<f64>> = active.iter().map(|&f| x.iter().map(|r| r[f]).collect()).collect();
    let m = cfg.features_per_split.resolve(active.len());

    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut builder = TreeBuilder {
                columns: &columns,
                active: &active,
                targets: &targets,
                n_classes: labels.len(),
                m,
                max_depth: cfg.max_depth,
                rng: rng::seeded(rng::derive_seed(cfg.seed, t as u64)),
            };
            let n = x.len();
            let rows: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| builder.rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            builder.build(rows)
        })
        .collect();

    Ok(TrainedForest { trees, labels, feature_mask: mask.to_vec(), config: cfg.clone() })
}

struct TreeBuilder<'a> {
    /// Indexed by position in `active`.
    columns: &'a [Vec<f64>],
    active: &'a [usize],
    targets: &'a [usize],
    n_classes: usize,
    m: usize,
    max_depth: Option<usize>,
    rng: rng::LabRng,
}

struct BestSplit {
    score: f64,
    /// Position in `active`.
    column: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    fn build(&mut self, rows: Vec<usize>) -> Tree {
        let total = rows.len() as f64;
        let mut nodes = vec![Node::Leaf { counts: Vec::new() }];
        let mut stack = vec![(0usize, rows, 0usize)];
        let mut order: Vec<usize> = (0..self.active.len()).collect();
        while let Some((slot, rows, depth)) = stack.pop() {
            let mut counts = vec![0u32; self.n_classes];
            for &r in &rows {
                counts[self.targets[r]] += 1;
            }
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_capped = self.max_depth.is_some_and(|md| depth >= md);
            if pure || depth_capped || rows.len() < 2 {
                nodes[slot] = Node::Leaf { counts };
                continue;
            }
            let Some(best) = self.best_split(&rows, &counts, &mut order) else {
                nodes[slot] = Node::Leaf { counts };
                continue;
            };
            let col = &self.columns[best.column];
            let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| col[r] <= best.threshold);
            let n = rows.len() as f64;
            let parent_sq: f64 = counts.iter().map(|&c| f64::from(c) * f64::from(c)).sum::<f64>() / n;
            let gain = ((best.score - parent_sq) / total).max(0.0);
            let li = nodes.len();
            nodes.push(Node::Leaf { counts: Vec::new() });
            nodes.push(Node::Leaf { counts: Vec::new() });
            nodes[slot] = Node::Split {
                feature: self.active[best.column],
                threshold: best.threshold,
                left: li,
                right: li + 1,
                gain,
            };
            stack.push((li + 1, right, depth + 1));
            stack.push((li, left, depth + 1));
        }
        Tree { nodes }
    }

    /// Best Gini split over a random draw of non-constant features.
    ///
    /// The score maximized is `sum(cl^2)/nl + sum(cr^2)/nr`, which orders
    /// splits the same way as the weighted child impurity (lower is better).
    fn best_split(&mut self, rows: &[usize], counts: &[u32], order: &mut [usize]) -> Option<BestSplit> {
        let mut best: Option<BestSplit> = None;
        let mut visited = 0;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        for j in 0..order.len() {
            if visited == self.m {
                break;
            }
            let k = self.rng.random_range(j..order.len());
            order.swap(j, k);
            let c = order[j];
            let col = &self.columns[c];
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(col[r]), hi.max(col[r]))
            });
            if lo == hi {
                continue;
            }
            visited += 1;
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (col[r], self.targets[r])));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((score, threshold)) = scan_feature(&pairs, counts) {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        score > b.score || (score == b.score && self.active[c] < self.active[b.column])
                    }
                };
                if better {
                    best = Some(BestSplit { score, column: c, threshold });
                }
            }
        }
        best
    }
}

/// Sweeps the sorted `(value, class)` pairs and returns the best score and
/// its midpoint threshold.
fn scan_feature(pairs: &[(f64, usize)], counts: &[u32]) -> Option<(f64, f64)> {
    let n = pairs.len();
    let mut left = vec![0u64; counts.len()];
    let mut right: Vec<u64> = counts.iter().map(|&c| u64::from(c)).collect();
    let mut sq_left = 0u64;
    let mut sq_right: u64 = right.iter().map(|c| c * c).sum();
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        let c = pairs[i].1;
        sq_left += 2 * left[c] + 1;
        sq_right -= 2 * right[c] - 1;
        left[c] += 1;
        right[c] -= 1;
        let (a, b) = (pairs[i].0, pairs[i + 1].0);
        if a < b {
            let nl = (i + 1) as f64;
            let nr = (n - i - 1) as f64;
            let score = sq_left as f64 / nl + sq_right as f64 / nr;
            if best.is_none_or(|(s, _)| score > s) {
                let mid = a + (b - a) / 2.0;
                let threshold = if mid < b { mid } else { a };
                best = Some((score, threshold));
            }
        }
    }
    best
}

impl TrainedForest {
    pub fn n_features(&self) -> usize {
        self.feature_mask.len()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_features() {
            return Err(Error::Dimension { expected: self.n_features(), got: row.len() });
        }
        Ok(())
    }

    /// Fraction of trees voting for each class.
    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_row(row)?;
        let mut votes = vec![0u32; self.labels.len()];
        for t in &self.trees {
            votes[t.vote(row)] += 1;
        }
        let n = self.trees.len() as f64;
        Ok(votes.into_iter().map(|v| f64::from(v) / n).collect())
    }

    pub fn predict_index(&self, row: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(row)?))
    }

    pub fn predict(&self, row: &[f64]) -> Result<&str> {
        Ok(&self.labels[self.predict_index(row)?])
    }

    /// Mean decrease in impurity per feature, normalized to sum to one.
    pub fn feature_importance(&self) -> FeatureImportance {
        let mut values = vec![0.0; self.n_features()];
        for t in &self.trees {
            for node in &t.nodes {
                if let Node::Split { feature, gain, .. } = node {
                    values[*feature] += gain;
                }
            }
        }
        let n = self.trees.len() as f64;
        values.iter_mut().for_each(|v| *v /= n);
        let total: f64 = values.iter().sum();
        if total > 0.0 {
            values.iter_mut().for_each(|v| *v /= total);
            FeatureImportance { values, degenerate: false }
        } else {
            FeatureImportance { values: vec![0.0; self.n_features()], degenerate: true }
        }
    }

    /// Self-describing JSON: format tag, version, generator identity, config,
    /// class table, feature mask and trees.
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            rng: rng::RNG_ID.into(),
            n_features: self.n_features(),
            forest: self.clone(),
        };
        serde_json::to_string(&file).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported model {} v{}", file.format, file.version)));
        }
        if file.rng != rng::RNG_ID {
            return Err(Error::ModelFormat(format!("model trained with generator {}", file.rng)));
        }
        let f = file.forest;
        if f.feature_mask.len() != file.n_features || f.labels.is_empty() || f.trees.is_empty() {
            return Err(Error::ModelFormat("inconsistent header".into()));
        }
        for t in &f.trees {
            for node in &t.nodes {
                match node {
                    Node::Split { feature, left, right, .. } => {
                        if !f.feature_mask.get(*feature).copied().unwrap_or(false)
                            || *left >= t.nodes.len()
                            || *right >= t.nodes.len()
                        {
                            return Err(Error::ModelFormat("split references invalid feature or node".into()));
                        }
                    }
                    Node::Leaf { counts } => {
                        if counts.len() != f.labels.len() {
                            return Err(Error::ModelFormat("leaf class count mismatch".into()));
                        }
                    }
                }
            }
        }
        Ok(f)
    }
}

/// Result of recursive feature elimination.
#[derive(Debug, Clone)]
pub struct RfeOutcome {
    pub mask: Vec<bool>,
    /// Forest trained on the final mask.
    pub forest: TrainedForest,
    pub passes: usize,
}

/// Recursive feature elimination: train, drop the `ceil(step * remaining)`
/// least important retained features (never going below `keep`), repeat
/// until exactly `keep` remain. Among equally important features the higher
/// index is dropped first.
pub fn rfe<S: AsRef<str>>(x: &[Vec<f64>], y: &[S], cfg: &ForestConfig, keep: usize, step: f64) -> Result<RfeOutcome> {
    let d = check_input(x, y)?;
    if keep < 1 {
        return Err(Error::InvalidArgument("RFE must keep at least one feature".into()));
    }
    if keep > d {
        return Err(Error::InvalidArgument(format!("cannot keep {keep} of {d} features")));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidArgument(format!("RFE step {step} outside (0, 1]")));
    }
    let mut mask = vec![true; d];
    let mut remaining = d;
    let mut passes = 0;
    loop {
        let forest = train_masked(x, y, cfg, &mask)?;
        passes += 1;
        if remaining <= keep {
            return Ok(RfeOutcome { mask, forest, passes });
        }
        let drop = ((step * remaining as f64).ceil() as usize).min(remaining - keep).max(1);
        let importance = forest.feature_importance().values;
        let mut ranked: Vec<usize> = (0..d).filter(|&f| mask[f]).collect();
        ranked.sort_by(|&a, &b| importance[a].total_cmp(&importance[b]).then(b.cmp(&a)));
        for &f in &ranked[..drop] {
            mask[f] = false;
        }
        remaining -= drop;
    }
}
