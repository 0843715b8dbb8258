//! Sample-to-vector maps.
//!
//! Two fixed layouts exist. `Device32` (index ranges, inclusive):
//!
//! | range  | content                                              |
//! |--------|------------------------------------------------------|
//! | 0-14   | size stats (min/mean/max/count/std) on m2s, s2m, data |
//! | 15-24  | 10-byte size buckets `[0,9]`..`[80,89]`, `[90,inf)`   |
//! | 25-29  | inter-arrival stats over all packets                  |
//! | 30-31  | avgIPT of sent (m2s) and received (s2m) packets       |
//!
//! `Action997`:
//!
//! | range    | content                                           |
//! |----------|---------------------------------------------------|
//! | 0-14     | size stats on m2s, s2m, data                      |
//! | 15-29    | size stats on the same three with packets < 46 B removed |
//! | 30-989   | exact-size counts for 46..=1005 B                 |
//! | 990-994  | inter-arrival stats                               |
//! | 995-996  | avgIPT sent / received                            |
//!
//! Empty sequences yield zeros and standard deviations are population values.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::trace::{filter_sequences, PacketRecord, TraceSample};

pub const DEVICE32_LEN: usize = 32;
pub const ACTION997_LEN: usize = 997;
/// Packets below this size are dropped from the filtered copies.
pub const SMALL_PACKET_CUTOFF: u32 = 46;
pub const FINE_MIN: u32 = 46;
pub const FINE_MAX: u32 = 1005;
pub const FINE_LEN: usize = (FINE_MAX - FINE_MIN + 1) as usize;
pub const COARSE_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSchema {
    Device32,
    Action997,
}

impl FeatureSchema {
    pub fn len(self) -> usize {
        match self {
            FeatureSchema::Device32 => DEVICE32_LEN,
            FeatureSchema::Action997 => ACTION997_LEN,
        }
    }

    pub fn names(self) -> &'static [String] {
        static DEVICE: OnceLock<Vec<String>> = OnceLock::new();
        static ACTION: OnceLock<Vec<String>> = OnceLock::new();
        match self {
            FeatureSchema::Device32 => DEVICE.get_or_init(device32_names),
            FeatureSchema::Action997 => ACTION.get_or_init(action997_names),
        }
    }

    pub fn extract(self, sample: &TraceSample) -> FeatureVector {
        match self {
            FeatureSchema::Device32 => extract_device32(sample),
            FeatureSchema::Action997 => extract_action997(sample),
        }
    }
}

impl fmt::Display for FeatureSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSchema::Device32 => "device32",
            FeatureSchema::Action997 => "action997",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema: FeatureSchema,
}

impl FeatureVector {
    pub fn names(&self) -> &'static [String] {
        self.schema.names()
    }
}

const STAT_NAMES: [&str; 5] = ["min", "mean", "max", "count", "std"];

fn push_stats(names: &mut Vec<String>, prefix: &str) {
    names.extend(STAT_NAMES.iter().map(|s| format!("{prefix}_{s}")));
}

fn device32_names() -> Vec<String> {
    let mut n = Vec::with_capacity(DEVICE32_LEN);
    for seq in ["m2s_size", "s2m_size", "data_size"] {
        push_stats(&mut n, seq);
    }
    for b in 0..9 {
        n.push(format!("bucket_{}_{}", b * 10, b * 10 + 9));
    }
    n.push("bucket_90_inf".into());
    push_stats(&mut n, "iat");
    n.push("avg_ipt_sent".into());
    n.push("avg_ipt_recv".into());
    n
}

fn action997_names() -> Vec<String> {
    let mut n = Vec::with_capacity(ACTION997_LEN);
    for seq in ["m2s_size", "s2m_size", "data_size"] {
        push_stats(&mut n, seq);
    }
    for seq in ["m2s_ge46_size", "s2m_ge46_size", "data_ge46_size"] {
        push_stats(&mut n, seq);
    }
    n.extend((FINE_MIN..=FINE_MAX).map(|s| format!("size_eq_{s}")));
    push_stats(&mut n, "iat");
    n.push("avg_ipt_sent".into());
    n.push("avg_ipt_recv".into());
    n
}

/// min, mean, max, count, population std of a value list; zeros when empty.
pub fn stats5(values: impl IntoIterator<Item = f64>) -> [f64; 5] {
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut vals = Vec::new();
    for v in values {
        n += 1;
        sum += v;
        min = min.min(v);
        max = max.max(v);
        vals.push(v);
    }
    if n == 0 {
        return [0.0; 5];
    }
    let mean = sum / n as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    [min, mean, max, n as f64, var.sqrt()]
}

pub fn size_stats(seq: &[PacketRecord]) -> [f64; 5] {
    stats5(seq.iter().map(|p| f64::from(p.size)))
}

pub fn coarse_buckets(seq: &[PacketRecord]) -> [f64; COARSE_LEN] {
    let mut b = [0.0; COARSE_LEN];
    for p in seq {
        b[((p.size / 10) as usize).min(COARSE_LEN - 1)] += 1.0;
    }
    b
}

pub fn fine_buckets(seq: &[PacketRecord]) -> Vec<f64> {
    let mut b = vec![0.0; FINE_LEN];
    for p in seq {
        if (FINE_MIN..=FINE_MAX).contains(&p.size) {
            b[(p.size - FINE_MIN) as usize] += 1.0;
        }
    }
    b
}

/// Stats over consecutive timestamp differences of the whole packet list.
pub fn interarrival_stats(sample: &TraceSample) -> [f64; 5] {
    stats5(sample.packets.windows(2).map(|w| w[1].timestamp - w[0].timestamp))
}

/// Average inter-packet time; the sum of gaps telescopes to last - first.
pub fn avg_ipt(seq: &[PacketRecord]) -> f64 {
    match seq {
        [first, .., last] => (last.timestamp - first.timestamp) / (seq.len() - 1) as f64,
        _ => 0.0,
    }
}

fn drop_small(seq: &[PacketRecord]) -> Vec<PacketRecord> {
    seq.iter().filter(|p| p.size >= SMALL_PACKET_CUTOFF).copied().collect()
}

pub fn extract_device32(sample: &TraceSample) -> FeatureVector {
    let f = filter_sequences(sample);
    let mut v = Vec::with_capacity(DEVICE32_LEN);
    for seq in [&f.m2s, &f.s2m, &f.data] {
        v.extend(size_stats(seq));
    }
    v.extend(coarse_buckets(&sample.packets));
    v.extend(interarrival_stats(sample));
    v.push(avg_ipt(&f.m2s));
    v.push(avg_ipt(&f.s2m));
    debug_assert_eq!(v.len(), DEVICE32_LEN);
    FeatureVector { values: v, schema: FeatureSchema::Device32 }
}

pub fn extract_action997(sample: &TraceSample) -> FeatureVector {
    let f = filter_sequences(sample);
    let mut v = Vec::with_capacity(ACTION997_LEN);
    for seq in [&f.m2s, &f.s2m, &f.data] {
        v.extend(size_stats(seq));
    }
    for seq in [&f.m2s, &f.s2m, &f.data] {
        v.extend(size_stats(&drop_small(seq)));
    }
    v.extend(fine_buckets(&sample.packets));
    v.extend(interarrival_stats(sample));
    v.push(avg_ipt(&f.m2s));
    v.push(avg_ipt(&f.s2m));
    debug_assert_eq!(v.len(), ACTION997_LEN);
    FeatureVector { values: v, schema: FeatureSchema::Action997 }
}

/// Feature matrix CSV: sample id, one column per feature, then label columns.
pub fn matrix_csv(schema: FeatureSchema, rows: &[(String, Vec<f64>, Vec<String>)], label_keys: &[&str]) -> String {
    let mut out = String::from("sample_id");
    for n in schema.names() {
        out.push(',');
        out.push_str(n);
    }
    for k in label_keys {
        out.push(',');
        out.push_str(k);
    }
    out.push('\n');
    for (id, values, labels) in rows {
        out.push_str(id);
        for v in values {
            out.push(',');
            out.push_str(&v.to_string());
        }
        for l in labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Direction, Flavor};
    use proptest::prelude::*;

    fn sized(sizes: &[u32]) -> Vec<PacketRecord> {
        sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| PacketRecord::data(i as f64, Direction::MasterToSlave, s))
            .collect()
    }

    fn timed(ts: &[f64]) -> Vec<PacketRecord> {
        ts.iter().map(|&t| PacketRecord::data(t, Direction::MasterToSlave, 1)).collect()
    }

    #[test]
    fn size_stats_examples() {
        let s = size_stats(&sized(&[10, 20, 30]));
        assert_eq!(&s[..4], &[10.0, 20.0, 30.0, 3.0]);
        assert!((s[4] - (200.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((s[4] - 8.1650).abs() < 1e-4);
        assert_eq!(size_stats(&sized(&[7])), [7.0, 7.0, 7.0, 1.0, 0.0]);
        assert_eq!(size_stats(&[]), [0.0; 5]);
    }

    #[test]
    fn coarse_bucket_examples() {
        assert_eq!(coarse_buckets(&sized(&[5, 12, 95])), [1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let b = coarse_buckets(&sized(&[89, 90]));
        assert_eq!((b[8], b[9]), (1.0, 1.0));
        assert_eq!(coarse_buckets(&[]), [0.0; 10]);
    }

    #[test]
    fn fine_bucket_examples() {
        let b = fine_buckets(&sized(&[46, 46, 1005]));
        assert_eq!(b.len(), 960);
        assert_eq!((b[0], b[959]), (2.0, 1.0));
        assert_eq!(b.iter().sum::<f64>(), 3.0);
        assert!(fine_buckets(&sized(&[45, 1006])).iter().all(|&x| x == 0.0));
        assert!(fine_buckets(&[]).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn interarrival_examples() {
        let s = TraceSample::new(timed(&[0.0, 1.0, 3.0]), Flavor::Classic);
        assert_eq!(interarrival_stats(&s), [1.0, 1.5, 2.0, 2.0, 0.5]);
        let one = TraceSample::new(timed(&[4.0]), Flavor::Classic);
        assert_eq!(interarrival_stats(&one), [0.0; 5]);
        let ts: Vec<f64> = (0..11).map(f64::from).collect();
        let uni = TraceSample::new(timed(&ts), Flavor::Classic);
        assert_eq!(interarrival_stats(&uni), [1.0, 1.0, 1.0, 10.0, 0.0]);
    }

    #[test]
    fn avg_ipt_examples() {
        assert_eq!(avg_ipt(&timed(&[0.0, 1.0, 2.0])), 1.0);
        assert_eq!(avg_ipt(&timed(&[0.0, 0.5, 2.0])), 1.0);
        assert_eq!(avg_ipt(&[]), 0.0);
        assert_eq!(avg_ipt(&timed(&[5.0])), 0.0);
    }

    #[test]
    fn empty_sample_gives_zero_vectors() {
        let s = TraceSample::new(vec![], Flavor::Classic);
        let d = extract_device32(&s);
        assert_eq!(d.values, vec![0.0; 32]);
        let a = extract_action997(&s);
        assert_eq!(a.values, vec![0.0; 997]);
    }

    #[test]
    fn names_are_stable_and_unique() {
        for schema in [FeatureSchema::Device32, FeatureSchema::Action997] {
            let names = schema.names();
            assert_eq!(names.len(), schema.len());
            let set: std::collections::BTreeSet<_> = names.iter().collect();
            assert_eq!(set.len(), names.len());
            assert!(std::ptr::eq(names, schema.names()));
        }
        assert_eq!(FeatureSchema::Action997.names()[30], "size_eq_46");
        assert_eq!(FeatureSchema::Action997.names()[989], "size_eq_1005");
    }

    #[test]
    fn all_45_byte_packets_leave_filtered_stats_empty() {
        let packets: Vec<_> = (0..6)
            .map(|i| {
                let d = if i % 2 == 0 { Direction::MasterToSlave } else { Direction::SlaveToMaster };
                PacketRecord::data(i as f64 * 0.25, d, 45)
            })
            .collect();
        let v = extract_action997(&TraceSample::new(packets, Flavor::Classic)).values;
        assert!(v[0..15].iter().any(|&x| x != 0.0));
        assert!(v[15..30].iter().all(|&x| x == 0.0));
        assert!(v[30..990].iter().all(|&x| x == 0.0));
    }

    /// Five packets worked out by hand:
    ///
    /// | t    | dir | size | meta |
    /// |------|-----|------|------|
    /// | 0.0  | M2S | 100  | 0    |
    /// | 0.5  | S2M | 0    | 1    |
    /// | 1.0  | S2M | 50   | 0    |
    /// | 2.0  | M2S | 30   | 0    |
    /// | 4.0  | S2M | 200  | 0    |
    fn crafted() -> TraceSample {
        TraceSample::new(
            vec![
                PacketRecord::data(0.0, Direction::MasterToSlave, 100),
                PacketRecord::meta(0.5, Direction::SlaveToMaster),
                PacketRecord::data(1.0, Direction::SlaveToMaster, 50),
                PacketRecord::data(2.0, Direction::MasterToSlave, 30),
                PacketRecord::data(4.0, Direction::SlaveToMaster, 200),
            ],
            Flavor::Classic,
        )
    }

    #[test]
    fn crafted_device32_matches_hand_computation() {
        // m2s {100,30}: mean 65, std 35
        // s2m {0,50,200}: mean 250/3, var = (0^2+50^2+200^2)/3 - (250/3)^2
        // data {100,50,30,200}: mean 95, var = (25+2025+4225+11025)/4 = 4325
        // buckets over all five: sizes 100,0,50,30,200 -> b0=1, b3=1, b5=1, b9=2
        // gaps {0.5,0.5,1,2}: mean 1, var = (0.25+0.25+0+1)/4 = 0.375
        // avgIPT m2s (2-0)/1 = 2, s2m (4-0.5)/2 = 1.75
        let s2m_mean = 250.0 / 3.0;
        let s2m_var: f64 = (0.0 + 2500.0 + 40000.0) / 3.0 - s2m_mean * s2m_mean;
        let expected = vec![
            30.0, 65.0, 100.0, 2.0, 35.0,
            0.0, s2m_mean, 200.0, 3.0, s2m_var.sqrt(),
            30.0, 95.0, 200.0, 4.0, 4325f64.sqrt(),
            1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0,
            0.5, 1.0, 2.0, 4.0, 0.375f64.sqrt(),
            2.0, 1.75,
        ];
        let got = extract_device32(&crafted()).values;
        assert_eq!(got.len(), 32);
        for (i, (g, e)) in got.iter().zip(&expected).enumerate() {
            assert!((g - e).abs() < 1e-9, "feature {i}: {g} vs {e}");
        }
    }

    #[test]
    fn crafted_action997_matches_hand_computation() {
        // >=46 copies: m2s {100}, s2m {50,200}, data {100,50,200}
        let got = extract_action997(&crafted()).values;
        let dev = extract_device32(&crafted()).values;
        assert_eq!(&got[0..15], &dev[0..15]);
        let data_mean = 350.0 / 3.0;
        let data_var = (100f64 * 100.0 + 2500.0 + 40000.0) / 3.0 - data_mean * data_mean;
        let filtered = [
            100.0, 100.0, 100.0, 1.0, 0.0,
            50.0, 125.0, 200.0, 2.0, 75.0,
            50.0, data_mean, 200.0, 3.0, data_var.sqrt(),
        ];
        for (g, e) in got[15..30].iter().zip(filtered) {
            assert!((g - e).abs() < 1e-9, "{g} vs {e}");
        }
        for (i, &c) in got[30..990].iter().enumerate() {
            let size = 46 + i as u32;
            let e = if [50, 100, 200].contains(&size) { 1.0 } else { 0.0 };
            assert_eq!(c, e, "size {size}");
        }
        assert_eq!(&got[990..997], &dev[25..32]);
    }

    fn arb_sample() -> impl Strategy<Value = TraceSample> {
        proptest::collection::vec((0.0f64..3.0, any::<bool>(), any::<bool>(), 0u32..1100), 0..80).prop_map(|rows| {
            let mut t = 0.0;
            let packets = rows
                .into_iter()
                .map(|(dt, m2s, meta, size)| {
                    t += dt;
                    PacketRecord {
                        timestamp: t,
                        direction: if m2s { Direction::MasterToSlave } else { Direction::SlaveToMaster },
                        size: if meta { 0 } else { size },
                        is_meta: meta,
                    }
                })
                .collect();
            TraceSample::new(packets, Flavor::Classic)
        })
    }

    proptest! {
        #[test]
        fn avg_ipt_telescopes(ts in proptest::collection::vec(0.0f64..1e4, 2..100)) {
            let mut ts = ts;
            ts.sort_by(f64::total_cmp);
            let seq = timed(&ts);
            let n = ts.len();
            let expect = (ts[n - 1] - ts[0]) / (n - 1) as f64;
            prop_assert!((avg_ipt(&seq) - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }

        #[test]
        fn shape_and_finiteness(s in arb_sample()) {
            let d = extract_device32(&s);
            let a = extract_action997(&s);
            prop_assert_eq!(d.values.len(), 32);
            prop_assert_eq!(a.values.len(), 997);
            prop_assert!(d.values.iter().chain(&a.values).all(|v| v.is_finite()));
        }

        #[test]
        fn bucket_sums_match_in_range_counts(s in arb_sample()) {
            let coarse: f64 = coarse_buckets(&s.packets).iter().sum();
            prop_assert_eq!(coarse as usize, s.packets.len());
            let fine: f64 = fine_buckets(&s.packets).iter().sum();
            let in_range = s.packets.iter().filter(|p| (46..=1005).contains(&p.size)).count();
            prop_assert_eq!(fine as usize, in_range);
        }

        #[test]
        fn time_shift_invariance(s in arb_sample(), shift in 0u32..5000) {
            // Shifted differences round differently, so compare with a tolerance.
            let shifted = s.with_packets(
                s.packets.iter().map(|p| PacketRecord { timestamp: p.timestamp + f64::from(shift), ..*p }).collect(),
            );
            for schema in [FeatureSchema::Device32, FeatureSchema::Action997] {
                let a = schema.extract(&s).values;
                let b = schema.extract(&shifted).values;
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{} vs {}", x, y);
                }
            }
        }
    }
}
