//! Observation model: what a passive sniffer isolates for one connection.
//!
//! A capture is a time-ordered list of link-layer events. Each event carries
//! its arrival time, the piconet direction, the L2CAP payload length and a
//! flag for null/poll/ACK frames that carry no payload.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label keys every labeled sample carries.
pub const LABEL_KEYS: [&str; 6] = ["device", "app", "action", "flavor", "pair", "day"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    MasterToSlave,
    SlaveToMaster,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::MasterToSlave => "M2S",
            Direction::SlaveToMaster => "S2M",
        }
    }

    pub fn reverse(self) -> Self {
        match self {
            Direction::MasterToSlave => Direction::SlaveToMaster,
            Direction::SlaveToMaster => Direction::MasterToSlave,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M2S" => Ok(Direction::MasterToSlave),
            "S2M" => Ok(Direction::SlaveToMaster),
            other => Err(Error::InvalidArgument(format!("unknown direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Flavor {
    Classic,
    LowEnergy,
}

impl Flavor {
    pub fn as_str(self) -> &'static str {
        match self {
            Flavor::Classic => "Classic",
            Flavor::LowEnergy => "LowEnergy",
        }
    }

    /// Largest L2CAP payload a single packet can carry: 1021 B for a 3-DH5
    /// ACL packet on Classic, 255 B on Low Energy.
    pub fn max_payload(self) -> u32 {
        match self {
            Flavor::Classic => 1021,
            Flavor::LowEnergy => 255,
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Classic" => Ok(Flavor::Classic),
            "LowEnergy" => Ok(Flavor::LowEnergy),
            other => Err(Error::InvalidArgument(format!("unknown flavor {other:?}"))),
        }
    }
}

/// One observed link-layer event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    /// Seconds since capture start, microsecond resolution.
    pub timestamp: f64,
    pub direction: Direction,
    /// L2CAP payload length in bytes.
    pub size: u32,
    /// Null/poll/ACK frame without payload.
    pub is_meta: bool,
}

impl PacketRecord {
    pub fn data(timestamp: f64, direction: Direction, size: u32) -> Self {
        PacketRecord { timestamp, direction, size, is_meta: false }
    }

    pub fn meta(timestamp: f64, direction: Direction) -> Self {
        PacketRecord { timestamp, direction, size: 0, is_meta: true }
    }
}

/// Rounds a time to the microsecond grid that the trace format can represent.
pub fn quantize_us(t: f64) -> f64 {
    (t * 1e6).round() / 1e6
}

/// True when `t` survives a `%.6f` print/parse cycle unchanged.
pub fn on_us_grid(t: f64) -> bool {
    format!("{t:.6}").parse::<f64>().map(|v| v == t).unwrap_or(false)
}

/// A labeled capture, packets in non-decreasing time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub packets: Vec<PacketRecord>,
    pub labels: BTreeMap<String, String>,
    pub flavor: Flavor,
}

impl TraceSample {
    pub fn new(packets: Vec<PacketRecord>, flavor: Flavor) -> Self {
        let mut labels = BTreeMap::new();
        labels.insert("flavor".to_string(), flavor.to_string());
        TraceSample { packets, labels, flavor }
    }

    /// A sample with no labels attached yet (as parsed from a trace file).
    pub fn unlabeled(packets: Vec<PacketRecord>) -> Self {
        TraceSample { packets, labels: BTreeMap::new(), flavor: Flavor::Classic }
    }

    pub fn label(&self, key: &str) -> Option<&str> {
        self.labels.get(key).map(String::as_str)
    }

    pub fn with_label(mut self, key: &str, value: impl Into<String>) -> Self {
        self.labels.insert(key.to_string(), value.into());
        self
    }

    /// Sets the flavor and keeps the `flavor` label in sync.
    pub fn set_flavor(&mut self, flavor: Flavor) {
        self.flavor = flavor;
        self.labels.insert("flavor".to_string(), flavor.to_string());
    }

    pub fn total_payload(&self) -> u64 {
        self.packets.iter().map(|p| u64::from(p.size)).sum()
    }

    pub fn duration(&self) -> f64 {
        match (self.packets.first(), self.packets.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp,
            _ => 0.0,
        }
    }

    /// Same packets and labels, new packet list.
    pub fn with_packets(&self, packets: Vec<PacketRecord>) -> Self {
        TraceSample { packets, labels: self.labels.clone(), flavor: self.flavor }
    }
}

/// A collection of samples sharing one label-key set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<TraceSample>,
    pub schema_note: String,
}

impl Dataset {
    pub fn new(samples: Vec<TraceSample>, schema_note: impl Into<String>) -> Self {
        Dataset { samples, schema_note: schema_note.into() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks that every sample carries the same label keys.
    pub fn check_label_keys(&self) -> Result<()> {
        let Some(first) = self.samples.first() else { return Ok(()) };
        let keys: BTreeSet<&String> = first.labels.keys().collect();
        for (i, s) in self.samples.iter().enumerate().skip(1) {
            let other: BTreeSet<&String> = s.labels.keys().collect();
            if other != keys {
                return Err(Error::Dataset(format!(
                    "sample {i} label keys {other:?} differ from {keys:?}"
                )));
            }
        }
        Ok(())
    }

    /// Values of `key` per sample, in sample order.
    pub fn labels_of(&self, key: &str) -> Result<Vec<String>> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.label(key)
                    .map(str::to_string)
                    .ok_or_else(|| Error::Dataset(format!("sample {i} has no label {key:?}")))
            })
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            schema_note: self.schema_note.clone(),
        }
    }

    /// Adds or overwrites label `key` from a mapping of another label's values.
    pub fn relabel(&mut self, from_key: &str, to_key: &str, map: &BTreeMap<String, String>) -> Result<()> {
        for (i, s) in self.samples.iter_mut().enumerate() {
            let src = s
                .label(from_key)
                .ok_or_else(|| Error::Dataset(format!("sample {i} has no label {from_key:?}")))?;
            let dst = map
                .get(src)
                .ok_or_else(|| Error::Dataset(format!("no mapping for {from_key}={src:?}")))?
                .clone();
            s.labels.insert(to_key.to_string(), dst);
        }
        Ok(())
    }
}

/// One broken invariant in a sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: &'static str,
    pub index: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{} at packet {}: {}", self.rule, i, self.detail),
            None => write!(f, "{}: {}", self.rule, self.detail),
        }
    }
}

/// Lists every invariant violation in `sample`; empty means valid.
///
/// Rules: `timestamp` (finite, non-negative), `precision` (on the
/// microsecond grid), `ordering` (non-decreasing), `meta-size` (meta frames
/// carry no payload) and `flavor-label` (label agrees with the flavor field).
pub fn validate_sample(sample: &TraceSample) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut prev: Option<f64> = None;
    for (i, p) in sample.packets.iter().enumerate() {
        if !p.timestamp.is_finite() || p.timestamp < 0.0 {
            out.push(Violation {
                rule: "timestamp",
                index: Some(i),
                detail: format!("timestamp {} is not a finite non-negative value", p.timestamp),
            });
        } else if !on_us_grid(p.timestamp) {
            out.push(Violation {
                rule: "precision",
                index: Some(i),
                detail: format!("timestamp {} is finer than a microsecond", p.timestamp),
            });
        }
        if let Some(t) = prev {
            if p.timestamp < t {
                out.push(Violation {
                    rule: "ordering",
                    index: Some(i),
                    detail: format!("timestamp {} precedes {}", p.timestamp, t),
                });
            }
        }
        if p.is_meta && p.size != 0 {
            out.push(Violation {
                rule: "meta-size",
                index: Some(i),
                detail: format!("meta packet carries {} bytes", p.size),
            });
        }
        prev = Some(p.timestamp);
    }
    if let Some(label) = sample.label("flavor") {
        if label != sample.flavor.as_str() {
            out.push(Violation {
                rule: "flavor-label",
                index: None,
                detail: format!("label {label:?} disagrees with flavor {}", sample.flavor),
            });
        }
    }
    out
}

/// The three packet sequences the feature extractors work on.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilteredSequences {
    pub m2s: Vec<PacketRecord>,
    pub s2m: Vec<PacketRecord>,
    /// Every packet that is not a null/ACK frame.
    pub data: Vec<PacketRecord>,
}

pub fn filter_sequences(sample: &TraceSample) -> FilteredSequences {
    let mut out = FilteredSequences::default();
    for p in &sample.packets {
        match p.direction {
            Direction::MasterToSlave => out.m2s.push(*p),
            Direction::SlaveToMaster => out.s2m.push(*p),
        }
        if !p.is_meta {
            out.data.push(*p);
        }
    }
    out
}

/// Histogram of byte values in a payload.
pub fn byte_histogram(payload: &[u8]) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &b in payload {
        h[b as usize] += 1;
    }
    h
}

/// Shannon entropy of a byte histogram in bits per byte.
///
/// Encrypted payloads sit in the 6 to 8 bit range; plaintext protocol data
/// typically lands near 4.
pub fn byte_entropy(histogram: &[u64; 256]) -> Result<f64> {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return Err(Error::EmptyPayload);
    }
    let total = total as f64;
    let h = histogram
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>();
    Ok(h.clamp(0.0, 8.0))
}
