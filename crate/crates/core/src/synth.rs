//! Seeded synthetic traces.
//!
//! A [`Profile`] describes one class of traffic: per-direction size mixtures,
//! a burst process and a meta-packet rate. [`generate_sample`] turns a
//! profile and a seed into a labeled [`TraceSample`]; [`generate_day`] runs a
//! [`DayPlan`] over a day of 20-minute captures and returns the concatenated
//! trace with its ground-truth action intervals.
//!
//! Profiles and plans are plain data (TOML via serde). The built-in pack
//! lives in [`pack`].

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::trace::{quantize_us, Dataset, Direction, Flavor, PacketRecord, TraceSample, LABEL_KEYS};

pub mod pack;

pub use pack::default_pack;

pub const PACK_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeAtom {
    pub size: u32,
    pub weight: f64,
}

/// Uniform integer sizes in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBand {
    pub lo: u32,
    pub hi: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SizeMixture {
    #[serde(default)]
    pub atoms: Vec<SizeAtom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseBand>,
}

impl SizeMixture {
    pub fn atoms(atoms: &[(u32, f64)]) -> Self {
        SizeMixture { atoms: atoms.iter().map(|&(size, weight)| SizeAtom { size, weight }).collect(), noise: None }
    }

    pub fn band(lo: u32, hi: u32) -> Self {
        SizeMixture { atoms: Vec::new(), noise: Some(NoiseBand { lo, hi, weight: 1.0 }) }
    }

    pub fn with_noise(mut self, lo: u32, hi: u32, weight: f64) -> Self {
        self.noise = Some(NoiseBand { lo, hi, weight });
        self
    }

    fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum::<f64>() + self.noise.map_or(0.0, |n| n.weight)
    }

    pub fn sample(&self, rng: &mut rng::LabRng) -> u32 {
        let mut u = rng.random::<f64>() * self.total_weight();
        for a in &self.atoms {
            if u < a.weight {
                return a.size;
            }
            u -= a.weight;
        }
        match self.noise {
            Some(n) => rng.random_range(n.lo..=n.hi),
            None => self.atoms.last().map_or(0, |a| a.size),
        }
    }

    /// Probability of each size.
    pub fn pmf(&self) -> BTreeMap<u32, f64> {
        let total = self.total_weight();
        let mut p = BTreeMap::new();
        for a in &self.atoms {
            *p.entry(a.size).or_insert(0.0) += a.weight / total;
        }
        if let Some(n) = self.noise {
            let each = n.weight / total / f64::from(n.hi - n.lo + 1);
            for s in n.lo..=n.hi {
                *p.entry(s).or_insert(0.0) += each;
            }
        }
        p
    }

    fn validate(&self, name: &str, max: u32) -> Result<()> {
        let bad = |msg: String| Err(Error::Profile(format!("{name}: {msg}")));
        if self.atoms.is_empty() && self.noise.is_none() {
            return bad("empty size mixture".into());
        }
        for a in &self.atoms {
            if !(a.weight > 0.0) {
                return bad(format!("atom {} has weight {}", a.size, a.weight));
            }
            if a.size > max {
                return bad(format!("atom size {} above {max}", a.size));
            }
        }
        if let Some(n) = self.noise {
            if !(n.weight > 0.0) || n.lo > n.hi || n.hi > max {
                return bad(format!("bad noise band {}..={} weight {}", n.lo, n.hi, n.weight));
            }
        }
        Ok(())
    }
}

/// How many bursts a sample contains and when they start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BurstCount {
    /// Uniform count in `[min, max]`; bursts follow each other with
    /// exponential gaps after `start_delay`.
    Range { min: u32, max: u32 },
    /// Bursts until the capture ends; the first one starts after an
    /// exponential gap.
    Continuous,
    /// One burst per listed start time, each shifted uniformly by up to
    /// `jitter` seconds either way.
    Schedule { starts: Vec<f64>, jitter: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstModel {
    pub count: BurstCount,
    /// Inclusive range, before `volume_scale`.
    pub packets_per_burst: [u32; 2],
    pub intra_gap_mean: f64,
    /// Constant added to every intra-burst gap (a connection-interval floor).
    #[serde(default)]
    pub intra_gap_floor: f64,
    pub inter_gap_mean: f64,
    #[serde(default)]
    pub start_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    pub flavor: Flavor,
    /// Experiment family, e.g. `device`, `app-high`, `day`.
    pub group: String,
    /// Label values; missing keys are filled with defaults.
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    pub m2s: SizeMixture,
    pub s2m: SizeMixture,
    /// Share of data packets sent master to slave.
    pub m2s_fraction: f64,
    pub bursts: BurstModel,
    /// Probability that a packet is an empty link-layer frame.
    pub meta_rate: f64,
    #[serde(default = "one")]
    pub volume_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Profile(format!("{}: {msg}", self.name)));
        let max = self.flavor.max_payload();
        self.m2s.validate(&self.name, max)?;
        self.s2m.validate(&self.name, max)?;
        let b = &self.bursts;
        if !(b.intra_gap_mean > 0.0 && b.inter_gap_mean > 0.0) {
            return bad("gap means must be positive".into());
        }
        if b.packets_per_burst[0] > b.packets_per_burst[1] {
            return bad("packets_per_burst min above max".into());
        }
        if !(b.start_delay >= 0.0) || !(b.intra_gap_floor >= 0.0) {
            return bad("negative start delay or gap floor".into());
        }
        match &b.count {
            BurstCount::Range { min, max } if min > max => return bad("burst count min above max".into()),
            BurstCount::Schedule { starts, jitter } if starts.iter().any(|s| *s < 0.0) || *jitter < 0.0 => {
                return bad("negative schedule entry".into())
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.meta_rate) || !(0.0..=1.0).contains(&self.m2s_fraction) {
            return bad("rates must lie in [0, 1]".into());
        }
        if !(self.volume_scale > 0.0) {
            return bad("volume_scale must be positive".into());
        }
        Ok(())
    }

    /// Label map of generated samples.
    pub fn sample_labels(&self) -> BTreeMap<String, String> {
        let mut labels = BTreeMap::new();
        for key in LABEL_KEYS {
            let default = match key {
                "pair" => "P1",
                "day" => "0",
                "flavor" => self.flavor.as_str(),
                _ => "none",
            };
            labels.insert(key.to_string(), default.to_string());
        }
        for (k, v) in &self.labels {
            labels.insert(k.clone(), v.clone());
        }
        labels.insert("flavor".into(), self.flavor.as_str().into());
        labels
    }

    pub fn label(&self, key: &str) -> String {
        self.sample_labels().remove(key).unwrap_or_default()
    }

    /// Copy with both gap means and the gap floor scaled.
    pub fn with_gap_factor(&self, factor: f64) -> Profile {
        let mut p = self.clone();
        p.bursts.intra_gap_mean *= factor;
        p.bursts.intra_gap_floor *= factor;
        p.bursts.inter_gap_mean *= factor;
        p
    }

    pub fn with_label(mut self, key: &str, value: impl Into<String>) -> Profile {
        self.labels.insert(key.to_string(), value.into());
        self
    }
}

fn exp(mean: f64) -> Exp<f64> {
    Exp::new(1.0 / mean).expect("positive gap mean")
}

/// Generates one capture of `duration` seconds.
pub fn generate_sample(profile: &Profile, duration: f64, seed: u64) -> TraceSample {
    let mut rng = rng::seeded(seed);
    let b = &profile.bursts;
    let intra = exp(b.intra_gap_mean);
    let inter = exp(b.inter_gap_mean);
    let mut packets = Vec::new();

    let emit_burst = |rng: &mut rng::LabRng, start: f64, packets: &mut Vec<PacketRecord>| -> f64 {
        let [lo, hi] = b.packets_per_burst;
        let raw = rng.random_range(lo..=hi);
        let k = ((f64::from(raw) * profile.volume_scale).round() as u32).max(u32::from(raw > 0));
        let mut t = start;
        for i in 0..k {
            if i > 0 {
                t += b.intra_gap_floor + intra.sample(rng);
            }
            if t >= duration {
                break;
            }
            let ts = quantize_us(t);
            if rng.random::<f64>() < profile.meta_rate {
                let dir = if rng.random_bool(0.5) { Direction::MasterToSlave } else { Direction::SlaveToMaster };
                packets.push(PacketRecord::meta(ts, dir));
            } else if rng.random::<f64>() < profile.m2s_fraction {
                packets.push(PacketRecord::data(ts, Direction::MasterToSlave, profile.m2s.sample(rng)));
            } else {
                packets.push(PacketRecord::data(ts, Direction::SlaveToMaster, profile.s2m.sample(rng)));
            }
        }
        t
    };

    match &b.count {
        BurstCount::Range { min, max } => {
            let n = rng.random_range(*min..=*max);
            let mut t = b.start_delay;
            for i in 0..n {
                if i > 0 {
                    t += inter.sample(&mut rng);
                }
                if t >= duration {
                    break;
                }
                t = emit_burst(&mut rng, t, &mut packets);
            }
        }
        BurstCount::Continuous => {
            let mut t = b.start_delay + inter.sample(&mut rng);
            while t < duration {
                t = emit_burst(&mut rng, t, &mut packets);
                t += inter.sample(&mut rng);
            }
        }
        BurstCount::Schedule { starts, jitter } => {
            for s in starts {
                let shift = if *jitter > 0.0 { rng.random_range(-jitter..=*jitter) } else { 0.0 };
                let t = (b.start_delay + s + shift).max(0.0);
                if t < duration {
                    emit_burst(&mut rng, t, &mut packets);
                }
            }
        }
    }
    packets.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    TraceSample { packets, labels: profile.sample_labels(), flavor: profile.flavor }
}

/// Seed of sample `index` of a profile.
pub fn sample_seed(seed: u64, profile: &str, index: usize) -> u64 {
    rng::derive_seed(rng::derive_named(seed, profile), index as u64)
}

/// `n` samples per profile, profile-major order. Sample seeds depend on the
/// profile name, so adding profiles does not change the others.
pub fn generate_dataset(profiles: &[&Profile], n: usize, duration: f64, seed: u64) -> Dataset {
    let jobs: Vec<(usize, usize)> = (0..profiles.len()).flat_map(|p| (0..n).map(move |i| (p, i))).collect();
    let samples = jobs
        .par_iter()
        .map(|&(p, i)| generate_sample(profiles[p], duration, sample_seed(seed, &profiles[p].name, i)))
        .collect();
    Dataset::new(samples, format!("synthetic n={n} duration={duration} seed={seed}"))
}

/// Overlays `extra` on `base`; labels and flavor come from `base`, and on
/// equal timestamps `base` packets come first.
pub fn merge_samples(base: &TraceSample, extra: &TraceSample) -> TraceSample {
    let mut packets = base.packets.clone();
    packets.extend_from_slice(&extra.packets);
    packets.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    base.with_packets(packets)
}

/// Collection of profiles plus the device-to-chipset map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePack {
    pub version: u32,
    #[serde(default)]
    pub chipsets: BTreeMap<String, String>,
    pub profiles: Vec<Profile>,
}

impl ProfilePack {
    pub fn validate(&self) -> Result<()> {
        if self.version != PACK_VERSION {
            return Err(Error::Profile(format!("unsupported pack version {}", self.version)));
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.profiles {
            if !seen.insert(p.name.as_str()) {
                return Err(Error::Profile(format!("duplicate profile {}", p.name)));
            }
            p.validate()?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Profile> {
        self.profiles.iter().find(|p| p.name == name)
    }

    pub fn group(&self, group: &str) -> Vec<&Profile> {
        self.profiles.iter().filter(|p| p.group == group).collect()
    }

    pub fn group_flavor(&self, group: &str, flavor: Flavor) -> Vec<&Profile> {
        self.profiles.iter().filter(|p| p.group == group && p.flavor == flavor).collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Profile(e.to_string()))
    }

    /// Parses and validates a pack; syntax errors carry the line number.
    pub fn from_toml(text: &str) -> Result<Self> {
        let pack: ProfilePack = toml::from_str(text).map_err(|e| Error::Profile(toml_error(text, &e)))?;
        pack.validate()?;
        Ok(pack)
    }

    /// Same pack with every gap mean scaled by an independent factor drawn
    /// uniformly from `[1 - rel, 1 + rel]`.
    pub fn perturbed(&self, rel: f64, seed: u64) -> ProfilePack {
        let mut out = self.clone();
        for p in &mut out.profiles {
            let mut r = rng::seeded(rng::derive_named(seed, &p.name));
            let f = 1.0 + r.random_range(-rel..=rel);
            *p = p.with_gap_factor(f);
        }
        out
    }
}

pub(crate) fn toml_error(text: &str, e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {}", e.message())
        }
        None => e.message().to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    /// Profile name.
    pub profile: String,
    #[serde(default)]
    pub popular: bool,
}

/// Day-long usage simulation.
///
/// The day is cut into captures of `segment_s`. Inside a capture, decisions
/// happen every `slot_s` seconds: with probability `base_probability *
/// weight(hour) / max(weight)` an action is drawn (popular ones
/// `popular_multiplier` times as likely), runs for `action_duration_s`, and
/// the next decision waits `min_wait_s` plus an exponential with mean
/// `mean_wait_s`, rounded up to the next slot. Actions only start if they fit
/// in the current capture. The background profile runs throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DayPlan {
    pub hourly_weights: Vec<f64>,
    pub base_probability: f64,
    pub catalog: Vec<CatalogEntry>,
    pub popular_multiplier: f64,
    pub segment_s: f64,
    pub total_s: f64,
    pub slot_s: f64,
    pub action_duration_s: f64,
    pub min_wait_s: f64,
    pub mean_wait_s: f64,
    pub background: Option<String>,
}

impl Default for DayPlan {
    fn default() -> Self {
        DayPlan {
            hourly_weights: (0..24).map(|h| if (8..22).contains(&h) { 8.0 } else { 1.0 }).collect(),
            base_probability: 0.15,
            catalog: Vec::new(),
            popular_multiplier: 2.0,
            segment_s: 1200.0,
            total_s: 86_400.0,
            slot_s: 60.0,
            action_duration_s: 20.0,
            min_wait_s: 60.0,
            mean_wait_s: 120.0,
            background: None,
        }
    }
}

/// One ground-truth action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthInterval {
    pub start: f64,
    pub end: f64,
    pub label: String,
}

pub fn truth_csv(truth: &[TruthInterval]) -> String {
    let mut out = String::from("start_s,end_s,label\n");
    for t in truth {
        out.push_str(&format!("{:.6},{:.6},{}\n", t.start, t.end, t.label));
    }
    out
}

impl DayPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Profile(format!("day plan: {m}")));
        if self.hourly_weights.len() != 24 || self.hourly_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("need 24 non-negative hourly weights");
        }
        if self.catalog.is_empty() {
            return bad("empty catalog");
        }
        if !(0.0..=1.0).contains(&self.base_probability) {
            return bad("base probability outside [0, 1]");
        }
        if !(self.segment_s > 0.0 && self.total_s > 0.0 && self.slot_s > 0.0 && self.action_duration_s > 0.0) {
            return bad("durations must be positive");
        }
        if !(self.popular_multiplier > 0.0 && self.min_wait_s >= 0.0 && self.mean_wait_s > 0.0) {
            return bad("bad wait or popularity parameters");
        }
        Ok(())
    }

    /// Trigger probability of a decision at absolute time `t`.
    pub fn trigger_probability(&self, t: f64) -> f64 {
        let max = self.hourly_weights.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return 0.0;
        }
        let hour = ((t / 3600.0).floor() as usize) % 24;
        self.base_probability * self.hourly_weights[hour] / max
    }

    /// Draws a catalog index, popular entries weighted by the multiplier.
    pub fn choose_action(&self, rng: &mut rng::LabRng) -> usize {
        let w = |e: &CatalogEntry| if e.popular { self.popular_multiplier } else { 1.0 };
        let total: f64 = self.catalog.iter().map(w).sum();
        let mut u = rng.random::<f64>() * total;
        for (i, e) in self.catalog.iter().enumerate() {
            if u < w(e) {
                return i;
            }
            u -= w(e);
        }
        self.catalog.len() - 1
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Profile(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: DayPlan = toml::from_str(text).map_err(|e| Error::Profile(toml_error(text, &e)))?;
        plan.validate()?;
        Ok(plan)
    }
}

/// Simulates a day and returns the trace with its ground truth. Capture `k`
/// is generated from `derive_seed(seed, k)` and covers
/// `[k * segment_s, (k + 1) * segment_s)`. Truth labels are the profiles'
/// `action` labels.
pub fn generate_day(plan: &DayPlan, pack: &ProfilePack, seed: u64) -> Result<(TraceSample, Vec<TruthInterval>)> {
    plan.validate()?;
    let actions: Vec<&Profile> = plan
        .catalog
        .iter()
        .map(|e| pack.get(&e.profile).ok_or_else(|| Error::Profile(format!("no profile for catalog entry {}", e.profile))))
        .collect::<Result<_>>()?;
    let background = match &plan.background {
        Some(name) => Some(pack.get(name).ok_or_else(|| Error::Profile(format!("no background profile {name}")))?),
        None => None,
    };
    let flavor = background.map_or(actions[0].flavor, |b| b.flavor);
    let n_segments = (plan.total_s / plan.segment_s).ceil() as usize;

    let segments: Vec<(Vec<PacketRecord>, Vec<TruthInterval>)> = (0..n_segments)
        .into_par_iter()
        .map(|k| {
            let origin = k as f64 * plan.segment_s;
            let len = plan.segment_s.min(plan.total_s - origin);
            let seg_seed = rng::derive_seed(seed, k as u64);
            let mut rng = rng::seeded(seg_seed);
            let mut packets = Vec::new();
            let mut truth = Vec::new();
            if let Some(bg) = background {
                let s = generate_sample(bg, len, rng::derive_seed(seg_seed, u64::MAX));
                packets.extend(s.packets);
            }
            let mut t = 0.0;
            let mut n_actions = 0u64;
            while t + plan.action_duration_s <= len {
                if rng.random::<f64>() < plan.trigger_probability(origin + t) {
                    let i = plan.choose_action(&mut rng);
                    let s = generate_sample(actions[i], plan.action_duration_s, rng::derive_seed(seg_seed, n_actions));
                    n_actions += 1;
                    packets.extend(s.packets.iter().map(|p| PacketRecord { timestamp: quantize_us(p.timestamp + t), ..*p }));
                    truth.push(TruthInterval {
                        start: origin + t,
                        end: origin + t + plan.action_duration_s,
                        label: actions[i].label("action"),
                    });
                    let wait = plan.action_duration_s + plan.min_wait_s + exp(plan.mean_wait_s).sample(&mut rng);
                    t += (wait / plan.slot_s).ceil() * plan.slot_s;
                } else {
                    t += plan.slot_s;
                }
            }
            let packets = packets
                .into_iter()
                .filter(|p| p.timestamp < len)
                .map(|p| PacketRecord { timestamp: quantize_us(p.timestamp + origin), ..p })
                .collect();
            (packets, truth)
        })
        .collect();

    let mut packets = Vec::new();
    let mut truth = Vec::new();
    for (p, t) in segments {
        packets.extend(p);
        truth.extend(t);
    }
    packets.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let mut sample = TraceSample::new(packets, flavor);
    for key in LABEL_KEYS {
        if key != "flavor" {
            sample.labels.insert(key.to_string(), "day".to_string());
        }
    }
    Ok((sample, truth))
}
