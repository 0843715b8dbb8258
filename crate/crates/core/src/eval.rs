//! Splits, cross-validation, metrics, metadata holdouts and packet loss.
//!
//! Per-class scores use the usual TP/FP/FN definitions with 0 for an empty
//! denominator. Macro scores are unweighted means over the classes that
//! occur in the ground truth. `macro_recall` is also reported as the
//! "accuracy" of balanced experiments: it is the mean of the confusion
//! matrix diagonal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::forest::{self, ForestConfig, TrainedForest};
use crate::rng;
use crate::trace::{Dataset, TraceSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// One entry per label in `labels` order.
    pub classes: Vec<ClassScores>,
    /// Sorted union of true and predicted labels.
    pub labels: Vec<String>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Plain fraction of correct predictions.
    pub accuracy: f64,
    /// Raw counts, rows = true label, columns = predicted label.
    pub counts: Vec<Vec<usize>>,
    /// `counts` divided by row support; empty rows stay zero.
    pub confusion: Vec<Vec<f64>>,
    pub config: String,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores predictions against ground truth.
pub fn score<S: AsRef<str>, T: AsRef<str>>(truth: &[S], pred: &[T]) -> Result<EvalReport> {
    if truth.len() != pred.len() {
        return Err(Error::InvalidArgument(format!("{} true labels but {} predictions", truth.len(), pred.len())));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("nothing to score".into()));
    }
    let labels: Vec<String> = truth
        .iter()
        .map(|s| s.as_ref())
        .chain(pred.iter().map(|s| s.as_ref()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect();
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let k = labels.len();
    let mut counts = vec![vec![0usize; k]; k];
    for (t, p) in truth.iter().zip(pred) {
        counts[index[t.as_ref()]][index[p.as_ref()]] += 1;
    }
    let mut classes = Vec::with_capacity(k);
    let mut confusion = vec![vec![0.0; k]; k];
    for i in 0..k {
        let tp = counts[i][i];
        let support: usize = counts[i].iter().sum();
        let predicted: usize = counts.iter().map(|row| row[i]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        if support > 0 {
            for j in 0..k {
                confusion[i][j] = counts[i][j] as f64 / support as f64;
            }
        }
        classes.push(ClassScores { label: labels[i].clone(), precision, recall, f1: f1(precision, recall), support });
    }
    let present: Vec<&ClassScores> = classes.iter().filter(|c| c.support > 0).collect();
    let mean = |f: fn(&ClassScores) -> f64| present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64;
    let correct: usize = (0..k).map(|i| counts[i][i]).sum();
    Ok(EvalReport {
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        accuracy: correct as f64 / truth.len() as f64,
        classes,
        labels,
        counts,
        confusion,
        config: String::new(),
    })
}

impl EvalReport {
    pub fn with_config(mut self, config: impl Into<String>) -> Self {
        self.config = config.into();
        self
    }

    pub fn class(&self, label: &str) -> Option<&ClassScores> {
        self.classes.iter().find(|c| c.label == label)
    }

    /// `class,precision,recall,f1,support` rows plus a `macro` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        for c in &self.classes {
            let _ = writeln!(out, "{},{:.6},{:.6},{:.6},{}", c.label, c.precision, c.recall, c.f1, c.support);
        }
        let total: usize = self.classes.iter().map(|c| c.support).sum();
        let _ = writeln!(
            out,
            "macro,{:.6},{:.6},{:.6},{}",
            self.macro_precision, self.macro_recall, self.macro_f1, total
        );
        out
    }

    /// Row-normalized confusion matrix; the header is the label order and
    /// each row starts with its true label.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.confusion) {
            out.push_str(l);
            for v in row {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
        out
    }
}

/// Feature extraction, optional RFE and forest settings for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub schema: FeatureSchema,
    pub forest: ForestConfig,
    /// Features kept by RFE; `None` trains on all of them.
    pub rfe_keep: Option<usize>,
    pub rfe_step: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { schema: FeatureSchema::Device32, forest: ForestConfig::default(), rfe_keep: None, rfe_step: 0.5 }
    }
}

/// Feature matrix of a dataset, one row per sample.
pub fn extract_matrix(ds: &Dataset, schema: FeatureSchema) -> Vec<Vec<f64>> {
    ds.samples.par_iter().map(|s| schema.extract(s).values).collect()
}

/// Fits RFE (when configured) and the forest on a feature matrix.
pub fn fit<S: AsRef<str>>(x: &[Vec<f64>], y: &[S], cfg: &PipelineConfig) -> Result<TrainedForest> {
    match cfg.rfe_keep {
        Some(keep) if x.first().is_some_and(|r| keep < r.len()) => {
            Ok(forest::rfe(x, y, &cfg.forest, keep, cfg.rfe_step)?.forest)
        }
        _ => forest::train(x, y, &cfg.forest),
    }
}

pub fn predict_all(model: &TrainedForest, x: &[Vec<f64>]) -> Result<Vec<String>> {
    x.par_iter().map(|r| model.predict(r).map(str::to_string)).collect()
}

/// Trains on one dataset and scores on another.
pub fn train_and_score(
    train: &Dataset,
    test: &Dataset,
    key: &str,
    cfg: &PipelineConfig,
) -> Result<(EvalReport, TrainedForest)> {
    let ytr = train.labels_of(key)?;
    let yte = test.labels_of(key)?;
    let model = fit(&extract_matrix(train, cfg.schema), &ytr, cfg)?;
    let pred = predict_all(&model, &extract_matrix(test, cfg.schema))?;
    Ok((score(&yte, &pred)?, model))
}

fn class_members(labels: &[String]) -> BTreeMap<&str, Vec<usize>> {
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        classes.entry(l.as_str()).or_default().push(i);
    }
    classes
}

/// Train/test indices with per-class proportions preserved. Each class of
/// `n` samples contributes `round(n * train_frac)` training samples, clamped
/// so both sides get at least one.
pub fn stratified_split_indices(labels: &[String], train_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction {train_frac} outside (0, 1)")));
    }
    let mut rng = rng::seeded(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, mut members) in class_members(labels) {
        let n = members.len();
        if n < 2 {
            return Err(Error::Dataset(format!("class {label:?} has a single sample")));
        }
        members.shuffle(&mut rng);
        let n_train = ((n as f64 * train_frac).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn stratified_split(ds: &Dataset, key: &str, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (tr, te) = stratified_split_indices(&ds.labels_of(key)?, train_frac, seed)?;
    Ok((ds.subset(&tr), ds.subset(&te)))
}

/// Assigns every sample to one of `k` folds. Each class is shuffled and
/// dealt round-robin; the dealing position carries over between classes so
/// fold sizes stay within one of each other.
pub fn stratified_folds(labels: &[String], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = rng::seeded(seed);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for (_, mut members) in class_members(labels) {
        members.shuffle(&mut rng);
        for (j, i) in members.iter().enumerate() {
            folds[(offset + j) % k].push(*i);
        }
        offset += members.len();
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    folds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// Folds actually used (may be below the request in non-strict mode).
    pub k: usize,
    pub fold_macro_f1: Vec<f64>,
    pub fold_macro_precision: Vec<f64>,
    pub fold_macro_recall: Vec<f64>,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub std_recall: f64,
    /// Scores of all out-of-fold predictions together.
    pub pooled: EvalReport,
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Stratified k-fold cross-validation. Extraction is per sample and
/// stateless; RFE and the forest are fit on each training fold only. Fold
/// `i` trains its forest with seed `derive_seed(cfg.forest.seed, i)`.
///
/// When a class has fewer than `k` samples, `strict` turns that into an
/// error; otherwise `k` drops to the smallest class count with a warning.
pub fn cross_validate(
    ds: &Dataset,
    key: &str,
    k: usize,
    cfg: &PipelineConfig,
    seed: u64,
    strict: bool,
) -> Result<CvReport> {
    let labels = ds.labels_of(key)?;
    let x = extract_matrix(ds, cfg.schema);
    cross_validate_matrix(&x, &labels, k, cfg, seed, strict)
}

pub fn cross_validate_matrix(
    x: &[Vec<f64>],
    labels: &[String],
    k: usize,
    cfg: &PipelineConfig,
    seed: u64,
    strict: bool,
) -> Result<CvReport> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("cross-validation needs k >= 2, got {k}")));
    }
    let classes = class_members(labels);
    let (smallest, min_count) = classes
        .iter()
        .map(|(l, m)| (*l, m.len()))
        .min_by_key(|(_, n)| *n)
        .ok_or_else(|| Error::Dataset("empty dataset".into()))?;
    let k = if min_count < k {
        if strict || min_count < 2 {
            return Err(Error::Dataset(format!("class {smallest:?} has {min_count} samples, fewer than {k} folds")));
        }
        log::warn!("class {smallest:?} has {min_count} samples; using {min_count} folds instead of {k}");
        min_count
    } else {
        k
    };
    let folds = stratified_folds(labels, k, seed);
    let fold_preds: Vec<Vec<(usize, String)>> = folds
        .par_iter()
        .enumerate()
        .map(|(fi, test)| {
            let held: BTreeSet<usize> = test.iter().copied().collect();
            let train: Vec<usize> = (0..labels.len()).filter(|i| !held.contains(i)).collect();
            let xtr: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let ytr: Vec<&str> = train.iter().map(|&i| labels[i].as_str()).collect();
            let mut fold_cfg = cfg.clone();
            fold_cfg.forest.seed = rng::derive_seed(cfg.forest.seed, fi as u64);
            let model = fit(&xtr, &ytr, &fold_cfg)?;
            test.iter().map(|&i| Ok((i, model.predict(&x[i])?.to_string()))).collect()
        })
        .collect::<Result<_>>()?;

    let mut f1s = Vec::with_capacity(k);
    let mut precs = Vec::with_capacity(k);
    let mut recs = Vec::with_capacity(k);
    let mut pooled = vec![String::new(); labels.len()];
    for preds in &fold_preds {
        let truth: Vec<&str> = preds.iter().map(|(i, _)| labels[*i].as_str()).collect();
        let guess: Vec<&str> = preds.iter().map(|(_, p)| p.as_str()).collect();
        let r = score(&truth, &guess)?;
        f1s.push(r.macro_f1);
        precs.push(r.macro_precision);
        recs.push(r.macro_recall);
        for (i, p) in preds {
            pooled[*i] = p.clone();
        }
    }
    let (mean_f1, std_f1) = mean_std(&f1s);
    let (mean_recall, std_recall) = mean_std(&recs);
    let (mean_precision, _) = mean_std(&precs);
    Ok(CvReport {
        k,
        mean_f1,
        std_f1,
        mean_precision,
        mean_recall,
        std_recall,
        fold_macro_f1: f1s,
        fold_macro_precision: precs,
        fold_macro_recall: recs,
        pooled: score(labels, &pooled)?,
    })
}

/// Partitions samples by the value of `key`. Samples whose value is in
/// neither list are dropped.
pub fn holdout_by_key<S: AsRef<str>>(
    ds: &Dataset,
    key: &str,
    train_values: &[S],
    test_values: &[S],
) -> Result<(Dataset, Dataset)> {
    let tr: BTreeSet<&str> = train_values.iter().map(|s| s.as_ref()).collect();
    let te: BTreeSet<&str> = test_values.iter().map(|s| s.as_ref()).collect();
    if let Some(v) = tr.intersection(&te).next() {
        return Err(Error::InvalidArgument(format!("{key}={v:?} is in both train and test values")));
    }
    let labels = ds.labels_of(key)?;
    let pick = |set: &BTreeSet<&str>| -> Vec<usize> {
        labels.iter().enumerate().filter(|(_, l)| set.contains(l.as_str())).map(|(i, _)| i).collect()
    };
    let (a, b) = (pick(&tr), pick(&te));
    if a.is_empty() || b.is_empty() {
        return Err(Error::Dataset(format!("holdout on {key} leaves an empty partition")));
    }
    Ok((ds.subset(&a), ds.subset(&b)))
}

/// Values of `class_key` present in `test` but never in `train`; their
/// recall is necessarily zero.
pub fn unseen_classes(train: &Dataset, test: &Dataset, class_key: &str) -> Result<Vec<String>> {
    let seen: BTreeSet<String> = train.labels_of(class_key)?.into_iter().collect();
    let test: BTreeSet<String> = test.labels_of(class_key)?.into_iter().collect();
    Ok(test.difference(&seen).cloned().collect())
}

/// Drops each packet independently with probability `p`.
pub fn apply_packet_loss(sample: &TraceSample, p: f64, seed: u64) -> Result<TraceSample> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("loss rate {p} outside [0, 1]")));
    }
    let mut rng = rng::seeded(seed);
    let kept = sample.packets.iter().filter(|_| rng.random::<f64>() >= p).copied().collect();
    Ok(sample.with_packets(kept))
}

/// Packet loss over a whole dataset, sample `i` seeded with `derive_seed(seed, i)`.
pub fn dataset_packet_loss(ds: &Dataset, p: f64, seed: u64) -> Result<Dataset> {
    let samples = ds
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| apply_packet_loss(s, p, rng::derive_seed(seed, i as u64)))
        .collect::<Result<_>>()?;
    Ok(Dataset::new(samples, format!("{} [loss {p}]", ds.schema_note)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Direction, Flavor, PacketRecord};
    use proptest::prelude::*;
    use rand::Rng;

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let y = strs(&["a", "b", "b", "c"]);
        let r = score(&y, &y).unwrap();
        assert_eq!((r.macro_precision, r.macro_recall, r.macro_f1, r.accuracy), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_computed_scores() {
        let r = score(&["A", "A", "B", "B"], &["A", "B", "B", "B"]).unwrap();
        let a = r.class("A").unwrap();
        let b = r.class("B").unwrap();
        assert_eq!((a.precision, a.recall), (1.0, 0.5));
        assert!((b.precision - 2.0 / 3.0).abs() < 1e-12 && b.recall == 1.0);
        assert!((r.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert!((r.macro_f1 - 0.7333).abs() < 1e-4);
        assert_eq!(r.counts, vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(r.confusion, vec![vec![0.5, 0.5], vec![0.0, 1.0]]);
    }

    #[test]
    fn never_predicted_class_scores_zero() {
        let r = score(&["A", "B", "C"], &["A", "B", "B"]).unwrap();
        let c = r.class("C").unwrap();
        assert_eq!((c.precision, c.recall, c.f1), (0.0, 0.0, 0.0));
        assert!(score(&["A"], &["A", "B"]).is_err());
    }

    #[test]
    fn csv_exports() {
        let r = score(&["A", "A", "B", "B"], &["A", "B", "B", "B"]).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("class,precision,recall,f1,support\nA,1.000000,0.500000,0.666667,2\n"));
        assert!(csv.ends_with("macro,0.833333,0.750000,0.733333,4\n"));
        assert_eq!(r.confusion_csv(), "true,A,B\nA,0.500000,0.500000\nB,0.000000,1.000000\n");
    }

    #[test]
    fn split_proportions() {
        let mut y = vec!["A".to_string(); 10];
        y.extend(vec!["B".to_string(); 10]);
        let (tr, te) = stratified_split_indices(&y, 0.8, 1).unwrap();
        assert_eq!(tr.iter().filter(|&&i| i < 10).count(), 8);
        assert_eq!(te.iter().filter(|&&i| i >= 10).count(), 2);
        let (tr, te) = stratified_split_indices(&vec!["A".to_string(); 5], 0.8, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (4, 1));
        assert_eq!(stratified_split_indices(&y, 0.8, 9).unwrap(), stratified_split_indices(&y, 0.8, 9).unwrap());
        let err = stratified_split_indices(&strs(&["A", "A", "lonely"]), 0.8, 1).unwrap_err();
        assert!(err.to_string().contains("lonely"));
    }

    #[test]
    fn ten_folds_hold_one_of_each() {
        let mut y = vec!["A".to_string(); 10];
        y.extend(vec!["B".to_string(); 10]);
        let folds = stratified_folds(&y, 10, 3);
        for f in &folds {
            assert_eq!(f.len(), 2);
            assert_eq!(f.iter().filter(|&&i| i < 10).count(), 1);
        }
    }

    fn constant_sample(size: u32, class: &str) -> TraceSample {
        let packets = (0..20).map(|i| PacketRecord::data(f64::from(i) * 0.5, Direction::MasterToSlave, size)).collect();
        TraceSample::new(packets, Flavor::Classic).with_label("device", class)
    }

    fn jittered(seed: u64, class: &str, base: u32) -> TraceSample {
        let mut r = rng::seeded(seed);
        let packets = (0..30)
            .map(|i| {
                let dir = if r.random_bool(0.5) { Direction::MasterToSlave } else { Direction::SlaveToMaster };
                PacketRecord::data(f64::from(i) * 0.25, dir, base + r.random_range(0..20))
            })
            .collect();
        TraceSample::new(packets, Flavor::Classic).with_label("device", class)
    }

    #[test]
    fn separable_cv_is_perfect() {
        let mut samples = Vec::new();
        for i in 0..20 {
            samples.push(jittered(i, "small", 10));
            samples.push(jittered(100 + i, "large", 300));
        }
        let ds = Dataset::new(samples, "separable");
        let r = cross_validate(&ds, "device", 10, &PipelineConfig::default(), 5, true).unwrap();
        assert_eq!(r.k, 10);
        assert_eq!(r.mean_f1, 1.0);
        assert_eq!(r.pooled.macro_f1, 1.0);
    }

    #[test]
    fn shuffled_labels_are_near_chance() {
        let mut total = 0.0;
        for seed in 0..10u64 {
            let mut r = rng::seeded(1000 + seed);
            let mut labels: Vec<&str> = (0..40).map(|i| if i < 20 { "a" } else { "b" }).collect();
            labels.shuffle(&mut r);
            let samples = labels.iter().enumerate().map(|(i, l)| jittered(seed * 100 + i as u64, l, 50)).collect();
            let ds = Dataset::new(samples, "null");
            let cfg = PipelineConfig { forest: ForestConfig::default().with_seed(seed), ..Default::default() };
            let rep = cross_validate(&ds, "device", 10, &cfg, seed, true).unwrap();
            total += rep.mean_f1;
        }
        let mean = total / 10.0;
        assert!((0.3..=0.7).contains(&mean), "mean macro F1 {mean}");
    }

    #[test]
    fn strict_flag_controls_fold_reduction() {
        let mut samples: Vec<TraceSample> = (0..12).map(|_| constant_sample(10, "a")).collect();
        samples.extend((0..4).map(|_| constant_sample(90, "b")));
        let ds = Dataset::new(samples, "");
        assert!(cross_validate(&ds, "device", 10, &PipelineConfig::default(), 0, true).is_err());
        let r = cross_validate(&ds, "device", 10, &PipelineConfig::default(), 0, false).unwrap();
        assert_eq!(r.k, 4);
        assert_eq!(r.fold_macro_f1.len(), 4);
    }

    #[test]
    fn holdout_partitions() {
        let mut samples = Vec::new();
        for (pair, day, n) in [("P1", "0", 3), ("P2", "5", 2)] {
            for _ in 0..n {
                samples.push(constant_sample(10, "x").with_label("pair", pair).with_label("day", day));
            }
        }
        let ds = Dataset::new(samples, "");
        let (tr, te) = holdout_by_key(&ds, "pair", &["P1"], &["P2"]).unwrap();
        assert_eq!((tr.len(), te.len()), (3, 2));
        assert!(te.samples.iter().all(|s| s.label("pair") == Some("P2")));
        let (tr, te) = holdout_by_key(&ds, "day", &["0"], &["5"]).unwrap();
        assert_eq!((tr.len(), te.len()), (3, 2));
        assert!(holdout_by_key(&ds, "pair", &["P1", "P2"], &["P2"]).is_err());
    }

    #[test]
    fn unseen_classes_are_listed() {
        let tr = Dataset::new(vec![constant_sample(1, "a")], "");
        let te = Dataset::new(vec![constant_sample(1, "a"), constant_sample(1, "z")], "");
        assert_eq!(unseen_classes(&tr, &te, "device").unwrap(), vec!["z".to_string()]);
    }

    #[test]
    fn loss_extremes() {
        let s = constant_sample(10, "a");
        assert_eq!(apply_packet_loss(&s, 0.0, 4).unwrap(), s);
        assert!(apply_packet_loss(&s, 1.0, 4).unwrap().packets.is_empty());
        assert!(apply_packet_loss(&s, 1.5, 4).is_err());
        assert!(apply_packet_loss(&s, -0.1, 4).is_err());
    }

    #[test]
    fn half_loss_binomial_bound() {
        let packets: Vec<PacketRecord> =
            (0..10_000).map(|i| PacketRecord::data(f64::from(i) * 1e-3, Direction::SlaveToMaster, 5)).collect();
        let s = TraceSample::new(packets, Flavor::LowEnergy);
        // sd = 50, so the band is 4 sd wide on each side.
        let inside = (0..200u64)
            .filter(|&seed| (4800..=5200).contains(&apply_packet_loss(&s, 0.5, seed).unwrap().packets.len()))
            .count();
        assert!(inside >= 198, "{inside}/200 inside the band");
    }

    proptest! {
        #[test]
        fn self_score_is_perfect(y in proptest::collection::vec(0u8..5, 1..60)) {
            let y: Vec<String> = y.into_iter().map(|c| format!("c{c}")).collect();
            let r = score(&y, &y).unwrap();
            prop_assert_eq!(r.macro_f1, 1.0);
            prop_assert_eq!(r.macro_precision, 1.0);
            prop_assert_eq!(r.accuracy, 1.0);
        }

        #[test]
        fn confusion_rows_match_support(pairs in proptest::collection::vec((0u8..4, 0u8..4), 1..80)) {
            let t: Vec<String> = pairs.iter().map(|p| format!("c{}", p.0)).collect();
            let p: Vec<String> = pairs.iter().map(|p| format!("c{}", p.1)).collect();
            let r = score(&t, &p).unwrap();
            for (i, c) in r.classes.iter().enumerate() {
                prop_assert_eq!(r.counts[i].iter().sum::<usize>(), c.support);
                prop_assert_eq!(r.confusion[i][i], c.recall);
                if c.support > 0 {
                    prop_assert!((r.confusion[i].iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn metrics_ignore_row_order(pairs in proptest::collection::vec((0u8..4, 0u8..4), 1..60), seed in any::<u64>()) {
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rng::seeded(seed));
            let score_of = |v: &[(u8, u8)]| {
                let t: Vec<String> = v.iter().map(|p| format!("c{}", p.0)).collect();
                let p: Vec<String> = v.iter().map(|p| format!("c{}", p.1)).collect();
                score(&t, &p).unwrap()
            };
            prop_assert_eq!(score_of(&pairs), score_of(&shuffled));
        }

        #[test]
        fn folds_partition_the_data(y in proptest::collection::vec(0u8..4, 1..80), k in 2usize..12, seed in any::<u64>()) {
            let y: Vec<String> = y.into_iter().map(|c| format!("c{c}")).collect();
            let folds = stratified_folds(&y, k, seed);
            let mut all: Vec<usize> = folds.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
        }

        #[test]
        fn loss_keeps_an_ordered_subsequence(n in 0usize..200, p in 0.0f64..=1.0, seed in any::<u64>()) {
            let packets: Vec<PacketRecord> = (0..n).map(|i| PacketRecord::data(i as f64, Direction::MasterToSlave, i as u32)).collect();
            let s = TraceSample::new(packets, Flavor::Classic).with_label("app", "x");
            let out = apply_packet_loss(&s, p, seed).unwrap();
            prop_assert_eq!(&out.labels, &s.labels);
            let mut it = s.packets.iter();
            for kept in &out.packets {
                prop_assert!(it.any(|orig| orig == kept));
            }
        }
    }
}
