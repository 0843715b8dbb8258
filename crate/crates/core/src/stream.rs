//! Long-capture classification: find active windows, classify each segment
//! with a confidence threshold, score predictions against timed ground truth.
//!
//! Windows start at multiples of the stride and cover `[k * stride,
//! k * stride + L)`. A window is active when its non-meta bytes exceed the
//! threshold. In merged mode, overlapping or touching active windows are
//! joined and each union is then tightened to `[first, min(last + stride,
//! union_end))` where `first`/`last` are its first and last non-meta packets,
//! so a lone burst does not get padded by a full window on either side.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::forest::{argmax, TrainedForest};
use crate::synth::{generate_sample, merge_samples, sample_seed, DayPlan, ProfilePack, TruthInterval};
use crate::trace::{quantize_us, Dataset, PacketRecord, TraceSample};

pub const NO_ACTION: &str = "NoAction";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentMode {
    #[default]
    Merged,
    PerWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Segmenter {
    pub window_length: f64,
    pub stride: f64,
    pub byte_threshold: u64,
    pub mode: SegmentMode,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter { window_length: 30.0, stride: 1.0, byte_threshold: 200, mode: SegmentMode::Merged }
    }
}

impl Segmenter {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_length > 0.0) || !(self.stride > 0.0) || self.stride > self.window_length {
            return Err(Error::InvalidArgument(format!(
                "segmenter needs window_length > 0 and 0 < stride <= window_length, got {} / {}",
                self.window_length, self.stride
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub start: f64,
    pub end: f64,
    pub label: String,
    pub confidence: f64,
}

/// Indices `k` of active windows, ascending.
fn active_window_indices(data: &[&PacketRecord], seg: &Segmenter) -> Vec<u64> {
    let Some(last) = data.last() else { return Vec::new() };
    let k_max = (last.timestamp / seg.stride).floor() as u64;
    let mut out = Vec::new();
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut sum = 0u64;
    for k in 0..=k_max {
        let start = k as f64 * seg.stride;
        let end = start + seg.window_length;
        while hi < data.len() && data[hi].timestamp < end {
            sum += u64::from(data[hi].size);
            hi += 1;
        }
        while lo < hi && data[lo].timestamp < start {
            sum -= u64::from(data[lo].size);
            lo += 1;
        }
        if sum > seg.byte_threshold {
            out.push(k);
        }
    }
    out
}

/// Active segments, sorted and disjoint.
pub fn find_active_windows(trace: &TraceSample, seg: &Segmenter) -> Result<Vec<(f64, f64)>> {
    seg.validate()?;
    let data: Vec<&PacketRecord> = trace.packets.iter().filter(|p| !p.is_meta).collect();
    let ks = active_window_indices(&data, seg);
    let window = |k: u64| (k as f64 * seg.stride, k as f64 * seg.stride + seg.window_length);
    if seg.mode == SegmentMode::PerWindow {
        return Ok(ks.into_iter().map(window).collect());
    }
    let mut unions: Vec<(f64, f64)> = Vec::new();
    for k in ks {
        let (s, e) = window(k);
        match unions.last_mut() {
            Some(u) if s <= u.1 => u.1 = e,
            _ => unions.push((s, e)),
        }
    }
    let mut out = Vec::with_capacity(unions.len());
    for (s, e) in unions {
        let from = data.partition_point(|p| p.timestamp < s);
        let to = data.partition_point(|p| p.timestamp < e);
        if from == to {
            continue;
        }
        let first = data[from].timestamp;
        let last = data[to - 1].timestamp;
        out.push((first, (last + seg.stride).min(e)));
    }
    Ok(out)
}

/// Packets in `[start, end)`, shifted so the segment starts at zero.
pub fn slice_segment(trace: &TraceSample, start: f64, end: f64) -> TraceSample {
    let from = trace.packets.partition_point(|p| p.timestamp < start);
    let to = trace.packets.partition_point(|p| p.timestamp < end);
    let packets = trace.packets[from..to]
        .iter()
        .map(|p| PacketRecord { timestamp: quantize_us(p.timestamp - start), ..*p })
        .collect();
    trace.with_packets(packets)
}

/// Segment, best class and its probability, before thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentScore {
    pub start: f64,
    pub end: f64,
    pub label: String,
    pub confidence: f64,
}

pub fn score_segments(
    trace: &TraceSample,
    segments: &[(f64, f64)],
    model: &TrainedForest,
    schema: FeatureSchema,
) -> Result<Vec<SegmentScore>> {
    if model.n_features() != schema.len() {
        return Err(Error::Dimension { expected: model.n_features(), got: schema.len() });
    }
    segments
        .par_iter()
        .map(|&(start, end)| {
            let x = schema.extract(&slice_segment(trace, start, end)).values;
            let proba = model.predict_proba(&x)?;
            let best = argmax(&proba);
            Ok(SegmentScore { start, end, label: model.labels[best].clone(), confidence: proba[best] })
        })
        .collect()
}

fn threshold(scores: &[SegmentScore], t: f64) -> Vec<Prediction> {
    scores
        .iter()
        .map(|s| Prediction {
            start: s.start,
            end: s.end,
            label: if s.confidence > t { s.label.clone() } else { NO_ACTION.to_string() },
            confidence: s.confidence,
        })
        .collect()
}

/// One prediction per segment: the most likely class if its probability
/// exceeds `t`, else `NoAction`.
pub fn classify_stream(
    trace: &TraceSample,
    segments: &[(f64, f64)],
    model: &TrainedForest,
    schema: FeatureSchema,
    t: f64,
) -> Result<Vec<Prediction>> {
    Ok(threshold(&score_segments(trace, segments, model, schema)?, t))
}

/// Labels treated as "nothing happened" when scoring.
pub fn is_noise_label(label: &str) -> bool {
    label == NO_ACTION || label.starts_with("NoApp") || label.ends_with("_Close")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalScore {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn overlaps(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Greedy one-to-one matching. Truths are taken by earliest start; each takes
/// the unmatched same-label overlapping prediction that ends first.
/// Predictions with noise labels are never emitted and never match.
pub fn score_intervals(predictions: &[Prediction], truth: &[TruthInterval]) -> IntervalScore {
    let emitted: Vec<&Prediction> = predictions.iter().filter(|p| !is_noise_label(&p.label)).collect();
    let mut truths: Vec<&TruthInterval> = truth.iter().filter(|t| !is_noise_label(&t.label)).collect();
    truths.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    let mut used = vec![false; emitted.len()];
    let mut tp = 0;
    for t in &truths {
        let best = emitted
            .iter()
            .enumerate()
            .filter(|(i, p)| !used[*i] && p.label == t.label && overlaps((p.start, p.end), (t.start, t.end)))
            .min_by(|(i, a), (j, b)| a.end.total_cmp(&b.end).then(a.start.total_cmp(&b.start)).then(i.cmp(j)))
            .map(|(i, _)| i);
        if let Some(i) = best {
            used[i] = true;
            tp += 1;
        }
    }
    let fp = emitted.len() - tp;
    let fn_ = truths.len() - tp;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    IntervalScore { tp, fp, fn_, precision, recall, f1 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub score: IntervalScore,
}

/// Scores every threshold against the same segments and model outputs.
pub fn threshold_sweep(
    trace: &TraceSample,
    truth: &[TruthInterval],
    model: &TrainedForest,
    schema: FeatureSchema,
    seg: &Segmenter,
    thresholds: &[f64],
) -> Result<Vec<SweepRow>> {
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidArgument(format!("threshold {t} outside [0, 1]")));
    }
    let segments = find_active_windows(trace, seg)?;
    let scores = score_segments(trace, &segments, model, schema)?;
    Ok(thresholds
        .par_iter()
        .map(|&t| SweepRow { threshold: t, score: score_intervals(&threshold(&scores, t), truth) })
        .collect())
}

/// `lo, lo + step, ...` up to `hi` inclusive, rounded to clean decimals.
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| ((lo + step * i as f64) * 1e9).round() / 1e9).collect()
}

/// Training data for a day plan: `n` samples of every catalog action, each
/// overlaid on background traffic, plus `n` background-only samples as a
/// noise class.
pub fn training_set(pack: &ProfilePack, plan: &DayPlan, n: usize, duration: f64, seed: u64) -> Result<Dataset> {
    let background = match &plan.background {
        Some(name) => Some(pack.get(name).ok_or_else(|| Error::Profile(format!("no background profile {name}")))?),
        None => None,
    };
    let mut samples = Vec::new();
    for entry in &plan.catalog {
        let p = pack.get(&entry.profile).ok_or_else(|| Error::Profile(format!("no profile {}", entry.profile)))?;
        for i in 0..n {
            let s = generate_sample(p, duration, sample_seed(seed, &p.name, i));
            samples.push(match background {
                Some(bg) => merge_samples(&s, &generate_sample(bg, duration, sample_seed(seed, &format!("{}+bg", p.name), i))),
                None => s,
            });
        }
    }
    if let Some(bg) = background {
        for i in 0..n {
            samples.push(generate_sample(bg, duration, sample_seed(seed, &bg.name, i)));
        }
    }
    Ok(Dataset::new(samples, "stream training set"))
}

pub fn predictions_csv(predictions: &[Prediction]) -> String {
    let mut out = String::from("start_s,end_s,label,confidence\n");
    for p in predictions {
        let _ = writeln!(out, "{:.6},{:.6},{},{:.6}", p.start, p.end, p.label, p.confidence);
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("threshold,precision,recall,f1\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.6},{:.6},{:.6}", r.threshold, r.score.precision, r.score.recall, r.score.f1);
    }
    out
}
