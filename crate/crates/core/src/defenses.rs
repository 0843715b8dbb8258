//! Padding, delay-grouping and dummy injection, with their costs.
//!
//! Every transform returns the defended sample and a [`DefenseCost`]. Costs
//! are relative to the undefended sample: `extra_duration` is how much later
//! the last packet arrives, `overhead_pct` is added bytes over original
//! payload bytes (0 when the original carries no payload). Table rows report
//! bytes in KB of 1000 bytes.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::trace::{quantize_us, Dataset, Direction, Flavor, PacketRecord, TraceSample};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DefenseCost {
    pub mean_delay_per_packet: f64,
    pub extra_duration: f64,
    pub padding_bytes: u64,
    pub dummy_bytes: u64,
    pub overhead_pct: f64,
}

impl DefenseCost {
    fn measure(before: &TraceSample, after: &TraceSample, delay: f64, padding: u64, dummy: u64) -> Self {
        let end = |s: &TraceSample| s.packets.last().map_or(0.0, |p| p.timestamp);
        let original = before.total_payload();
        DefenseCost {
            mean_delay_per_packet: delay,
            extra_duration: (end(after) - end(before)).max(0.0),
            padding_bytes: padding,
            dummy_bytes: dummy,
            overhead_pct: if original == 0 { 0.0 } else { 100.0 * (padding + dummy) as f64 / original as f64 },
        }
    }
}

/// Pads every data packet to the flavor's maximum payload (1021 B for
/// Classic, 255 B for LE). Meta packets carry nothing and stay empty.
pub fn pad(sample: &TraceSample, flavor: Flavor) -> Result<(TraceSample, DefenseCost)> {
    let ceiling = flavor.max_payload();
    let mut padding = 0u64;
    let mut packets = sample.packets.clone();
    for (i, p) in packets.iter_mut().enumerate() {
        if p.is_meta {
            continue;
        }
        if p.size > ceiling {
            return Err(Error::Defense(format!("packet {i} has {} B, above the {flavor} ceiling of {ceiling} B", p.size)));
        }
        padding += u64::from(ceiling - p.size);
        p.size = ceiling;
    }
    let out = sample.with_packets(packets);
    let cost = DefenseCost::measure(sample, &out, 0.0, padding, 0);
    Ok((out, cost))
}

/// Holds every packet until the next whole second.
pub fn delay_group(sample: &TraceSample) -> (TraceSample, DefenseCost) {
    let mut total_delay = 0.0;
    let packets: Vec<PacketRecord> = sample
        .packets
        .iter()
        .map(|p| {
            let t = p.timestamp.ceil();
            total_delay += t - p.timestamp;
            PacketRecord { timestamp: t, ..*p }
        })
        .collect();
    let mean = if packets.is_empty() { 0.0 } else { total_delay / packets.len() as f64 };
    let out = sample.with_packets(packets);
    let cost = DefenseCost::measure(sample, &out, mean, 0, 0);
    (out, cost)
}

/// Empirical (size, direction) pairs that dummy packets are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSource {
    entries: Vec<(u32, Direction)>,
    m2s_fraction: f64,
}

impl SizeSource {
    pub fn new(entries: Vec<(u32, Direction)>) -> Self {
        let m2s = entries.iter().filter(|(_, d)| *d == Direction::MasterToSlave).count();
        let m2s_fraction = if entries.is_empty() { 0.5 } else { m2s as f64 / entries.len() as f64 };
        SizeSource { entries, m2s_fraction }
    }

    /// All data packets of a dataset.
    pub fn from_dataset(ds: &Dataset) -> Self {
        Self::new(
            ds.samples
                .iter()
                .flat_map(|s| s.packets.iter().filter(|p| !p.is_meta).map(|p| (p.size, p.direction)))
                .collect(),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn mean_size(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().map(|(s, _)| f64::from(*s)).sum::<f64>() / self.entries.len() as f64
    }

    pub fn m2s_fraction(&self) -> f64 {
        self.m2s_fraction
    }

    fn draw(&self, rng: &mut rng::LabRng) -> (u32, Direction) {
        let size = self.entries[rng.random_range(0..self.entries.len())].0;
        let dir = if rng.random::<f64>() < self.m2s_fraction { Direction::MasterToSlave } else { Direction::SlaveToMaster };
        (size, dir)
    }
}

/// Rayleigh scale whose distribution mean is `mean_w`.
pub fn rayleigh_sigma(mean_w: f64) -> f64 {
    mean_w / (PI / 2.0).sqrt()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DummyMode {
    /// Exactly `n_dummies` packets.
    #[default]
    Fixed,
    /// A uniform draw from `0..=n_dummies` per sample.
    UniformUpTo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DummyConfig {
    pub mean_w: f64,
    pub n_dummies: usize,
    pub mode: DummyMode,
}

impl Default for DummyConfig {
    fn default() -> Self {
        DummyConfig { mean_w: 6.0, n_dummies: 300, mode: DummyMode::Fixed }
    }
}

/// Injects exactly `n_dummies` data packets at Rayleigh-distributed offsets
/// from the first packet (or from 0 in an empty sample).
pub fn add_dummies(
    sample: &TraceSample,
    mean_w: f64,
    n_dummies: usize,
    source: &SizeSource,
    seed: u64,
) -> Result<(TraceSample, DefenseCost)> {
    add_dummies_with(sample, &DummyConfig { mean_w, n_dummies, mode: DummyMode::Fixed }, source, seed)
}

pub fn add_dummies_with(
    sample: &TraceSample,
    cfg: &DummyConfig,
    source: &SizeSource,
    seed: u64,
) -> Result<(TraceSample, DefenseCost)> {
    if !(cfg.mean_w > 0.0 && cfg.mean_w.is_finite()) {
        return Err(Error::Defense(format!("Rayleigh mean {} must be positive", cfg.mean_w)));
    }
    let mut rng = rng::seeded(seed);
    let n = match cfg.mode {
        DummyMode::Fixed => cfg.n_dummies,
        DummyMode::UniformUpTo => rng.random_range(0..=cfg.n_dummies),
    };
    if n == 0 {
        return Ok((sample.clone(), DefenseCost::measure(sample, sample, 0.0, 0, 0)));
    }
    if source.is_empty() {
        return Err(Error::Defense("empty size source".into()));
    }
    let sigma = rayleigh_sigma(cfg.mean_w);
    let origin = sample.packets.first().map_or(0.0, |p| p.timestamp);
    let mut dummies: Vec<PacketRecord> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let t = quantize_us(origin + sigma * (-2.0 * (1.0 - u).ln()).sqrt());
            let (size, dir) = source.draw(&mut rng);
            PacketRecord::data(t, dir, size)
        })
        .collect();
    dummies.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let dummy_bytes: u64 = dummies.iter().map(|p| u64::from(p.size)).sum();
    let mut packets = sample.packets.clone();
    packets.extend(dummies);
    // Stable: originals stay ahead of dummies with the same timestamp.
    packets.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let out = sample.with_packets(packets);
    let cost = DefenseCost::measure(sample, &out, 0.0, 0, dummy_bytes);
    Ok((out, cost))
}

/// A defense, or several applied in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defense {
    None,
    Pad,
    DelayGroup,
    Dummies(DummyConfig),
    Chain(Vec<Defense>),
}

impl Defense {
    pub fn name(&self) -> String {
        match self {
            Defense::None => "none".into(),
            Defense::Pad => "pad".into(),
            Defense::DelayGroup => "delay_group".into(),
            Defense::Dummies(_) => "add_dummies".into(),
            Defense::Chain(parts) => parts.iter().map(Defense::name).collect::<Vec<_>>().join("+"),
        }
    }

    /// Costs of a chain add up; overhead is recomputed against the
    /// original sample.
    pub fn apply(&self, sample: &TraceSample, source: &SizeSource, seed: u64) -> Result<(TraceSample, DefenseCost)> {
        match self {
            Defense::None => Ok((sample.clone(), DefenseCost::default())),
            Defense::Pad => pad(sample, sample.flavor),
            Defense::DelayGroup => Ok(delay_group(sample)),
            Defense::Dummies(cfg) => add_dummies_with(sample, cfg, source, seed),
            Defense::Chain(parts) => {
                let mut current = sample.clone();
                let mut delay = 0.0;
                let (mut padding, mut dummy) = (0, 0);
                for (i, d) in parts.iter().enumerate() {
                    let (next, c) = d.apply(&current, source, rng::derive_seed(seed, i as u64))?;
                    delay += c.mean_delay_per_packet;
                    padding += c.padding_bytes;
                    dummy += c.dummy_bytes;
                    current = next;
                }
                let cost = DefenseCost::measure(sample, &current, delay, padding, dummy);
                Ok((current, cost))
            }
        }
    }
}

/// A defended dataset with the cost of every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DefenseReport {
    pub dataset: Dataset,
    pub costs: Vec<DefenseCost>,
}

/// Applies a defense to every sample; sample `i` uses `derive_seed(seed, i)`.
pub fn defend_dataset(ds: &Dataset, defense: &Defense, source: &SizeSource, seed: u64) -> Result<DefenseReport> {
    let (samples, costs): (Vec<_>, Vec<_>) = ds
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| defense.apply(s, source, rng::derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(DefenseReport { dataset: Dataset::new(samples, format!("{} [{}]", ds.schema_note, defense.name())), costs })
}

/// One line of a defense cost table, costs averaged per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub defense: String,
    /// Attack accuracy after retraining on defended data, if measured.
    pub accuracy_pct: Option<f64>,
    pub delay_per_pkt_s: f64,
    pub extra_duration_s: f64,
    pub padding_kb: f64,
    pub dummy_kb: f64,
    pub overhead_pct: f64,
}

pub const COST_TABLE_HEADER: &str = "defense,accuracy_pct,delay_per_pkt_s,extra_duration_s,padding_kb,dummy_kb,overhead_pct";

pub fn defense_cost_summary(
    defense: &str,
    before: &Dataset,
    after: &Dataset,
    costs: &[DefenseCost],
    accuracy_pct: Option<f64>,
) -> Result<CostRow> {
    if before.len() != after.len() || before.len() != costs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} samples before, {} after, {} costs",
            before.len(),
            after.len(),
            costs.len()
        )));
    }
    let n = costs.len().max(1) as f64;
    let avg = |f: fn(&DefenseCost) -> f64| costs.iter().map(f).sum::<f64>() / n;
    Ok(CostRow {
        defense: defense.to_string(),
        accuracy_pct,
        delay_per_pkt_s: avg(|c| c.mean_delay_per_packet),
        extra_duration_s: avg(|c| c.extra_duration),
        padding_kb: avg(|c| c.padding_bytes as f64) / 1000.0,
        dummy_kb: avg(|c| c.dummy_bytes as f64) / 1000.0,
        overhead_pct: avg(|c| c.overhead_pct),
    })
}

pub fn cost_table_csv(rows: &[CostRow]) -> String {
    let mut out = format!("{COST_TABLE_HEADER}\n");
    for r in rows {
        let acc = r.accuracy_pct.map_or(String::new(), |a| format!("{a:.2}"));
        let _ = writeln!(
            out,
            "{},{acc},{:.4},{:.4},{:.3},{:.3},{:.2}",
            r.defense, r.delay_per_pkt_s, r.extra_duration_s, r.padding_kb, r.dummy_kb, r.overhead_pct
        );
    }
    out
}
