//! File formats and dataset assembly.
//!
//! Trace file (one capture per file):
//!
//! ```text
//! timestamp_s,direction,size_bytes,is_meta
//! 0.000000,M2S,120,0
//! 0.001250,S2M,0,1
//! ```
//!
//! Manifest (labels live here so traces can be relabeled without rewriting):
//!
//! ```text
//! file,device,app,action,flavor,pair,day
//! t0000.csv,HuaweiWatch2,Telegram,Open,Classic,P1,0
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;
use crate::trace::{validate_sample, Dataset, Direction, Flavor, PacketRecord, TraceSample};

pub const TRACE_HEADER: &str = "timestamp_s,direction,size_bytes,is_meta";
pub const MANIFEST_HEADER: &str = "file,device,app,action,flavor,pair,day";

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Parses a trace file. Line numbers in errors are 1-based (header = 1).
pub fn parse_trace_csv(content: &str) -> Result<TraceSample> {
    let mut lines = content.split('\n').enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == TRACE_HEADER => {}
        Some((_, h)) => return Err(parse_err(1, format!("bad header {h:?}"))),
        None => return Err(parse_err(1, "missing header")),
    }
    let mut packets = Vec::new();
    let mut line_of = Vec::new();
    let mut prev = 0.0f64;
    for (idx, raw) in lines {
        let lineno = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(lineno, format!("expected 4 fields, got {}", fields.len())));
        }
        let timestamp: f64 = fields[0]
            .parse()
            .map_err(|_| parse_err(lineno, format!("non-numeric timestamp {:?}", fields[0])))?;
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(parse_err(lineno, format!("invalid timestamp {:?}", fields[0])));
        }
        if timestamp < prev {
            return Err(parse_err(lineno, format!("timestamp {timestamp} decreases from {prev}")));
        }
        prev = timestamp;
        let direction: Direction = fields[1]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad direction {:?}", fields[1])))?;
        if fields[2].starts_with('-') {
            return Err(parse_err(lineno, format!("negative size {:?}", fields[2])));
        }
        let size: u32 = fields[2]
            .parse()
            .map_err(|_| parse_err(lineno, format!("non-numeric size {:?}", fields[2])))?;
        let is_meta = match fields[3] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(lineno, format!("is_meta must be 0 or 1, got {other:?}"))),
        };
        if is_meta && size != 0 {
            return Err(parse_err(lineno, format!("meta packet with {size} bytes")));
        }
        packets.push(PacketRecord { timestamp, direction, size, is_meta });
        line_of.push(lineno);
    }
    let sample = TraceSample::unlabeled(packets);
    if let Some(v) = validate_sample(&sample).first() {
        return Err(parse_err(v.index.map_or(1, |i| line_of[i]), v.to_string()));
    }
    Ok(sample)
}

pub fn write_trace_csv(sample: &TraceSample) -> String {
    let mut out = String::with_capacity(24 * (sample.packets.len() + 2));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for p in &sample.packets {
        let _ = writeln!(out, "{:.6},{},{},{}", p.timestamp, p.direction, p.size, u8::from(p.is_meta));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub file: String,
    pub device: String,
    pub app: String,
    pub action: String,
    pub flavor: Flavor,
    pub pair: String,
    pub day: u32,
}

impl ManifestRow {
    pub fn labels(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("device".to_string(), self.device.clone()),
            ("app".to_string(), self.app.clone()),
            ("action".to_string(), self.action.clone()),
            ("flavor".to_string(), self.flavor.to_string()),
            ("pair".to_string(), self.pair.clone()),
            ("day".to_string(), self.day.to_string()),
        ])
    }

    /// Builds a row from a sample's standard labels.
    pub fn from_sample(file: impl Into<String>, s: &TraceSample) -> Result<Self> {
        let get = |k: &str| s.label(k).unwrap_or("").to_string();
        let day = match s.label("day") {
            None | Some("") => 0,
            Some(d) => d.parse().map_err(|_| Error::Dataset(format!("non-integer day {d:?}")))?,
        };
        Ok(ManifestRow {
            file: file.into(),
            device: get("device"),
            app: get("app"),
            action: get("action"),
            flavor: s.flavor,
            pair: get("pair"),
            day,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn parse(content: &str) -> Result<Self> {
        let mut lines = content.split('\n').enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end_matches('\r') == MANIFEST_HEADER => {}
            _ => return Err(parse_err(1, "bad manifest header")),
        }
        let mut rows = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, raw) in lines {
            let lineno = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(parse_err(lineno, format!("expected 7 fields, got {}", f.len())));
            }
            if f[0].is_empty() {
                return Err(parse_err(lineno, "empty file path"));
            }
            if !seen.insert(f[0].to_string()) {
                return Err(Error::DuplicatePath(f[0].to_string()));
            }
            let flavor: Flavor = f[4].parse().map_err(|_| parse_err(lineno, format!("bad flavor {:?}", f[4])))?;
            let day: u32 = f[6].parse().map_err(|_| parse_err(lineno, format!("bad day {:?}", f[6])))?;
            rows.push(ManifestRow {
                file: f[0].to_string(),
                device: f[1].to_string(),
                app: f[2].to_string(),
                action: f[3].to_string(),
                flavor,
                pair: f[5].to_string(),
                day,
            });
        }
        Ok(Manifest { rows })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{},{},{}", r.file, r.device, r.app, r.action, r.flavor, r.pair, r.day);
        }
        out
    }
}

/// Loads every manifest row from `root`, in manifest order.
pub fn load_dataset(manifest: &Manifest, root: &Path) -> Result<Dataset> {
    let mut seen = BTreeSet::new();
    for r in &manifest.rows {
        if !seen.insert(r.file.as_str()) {
            return Err(Error::DuplicatePath(r.file.clone()));
        }
    }
    let samples = manifest
        .rows
        .par_iter()
        .map(|row| {
            let path: PathBuf = root.join(&row.file);
            let content = std::fs::read_to_string(&path)
                .map_err(|e| Error::Load { path: path.clone(), msg: e.to_string() })?;
            let mut s = parse_trace_csv(&content).map_err(|e| Error::Load { path: path.clone(), msg: e.to_string() })?;
            s.labels = row.labels();
            s.flavor = row.flavor;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(samples, format!("loaded from {}", root.display())))
}

/// Writes each sample as `<prefix><index>.csv` under `root` and returns the manifest.
pub fn write_dataset(ds: &Dataset, root: &Path, prefix: &str) -> Result<Manifest> {
    std::fs::create_dir_all(root)?;
    let width = ds.len().max(1).to_string().len().max(4);
    let mut rows = Vec::with_capacity(ds.len());
    for (i, s) in ds.samples.iter().enumerate() {
        let file = format!("{prefix}{i:0width$}.csv");
        std::fs::write(root.join(&file), write_trace_csv(s))?;
        rows.push(ManifestRow::from_sample(file, s)?);
    }
    Ok(Manifest { rows })
}

/// Splits into (Classic, LowEnergy), preserving order.
pub fn split_by_flavor(ds: &Dataset) -> (Dataset, Dataset) {
    let (classic, le): (Vec<_>, Vec<_>) =
        ds.samples.iter().cloned().partition(|s| s.flavor == Flavor::Classic);
    (
        Dataset::new(classic, format!("{} [Classic]", ds.schema_note)),
        Dataset::new(le, format!("{} [LowEnergy]", ds.schema_note)),
    )
}

/// Equalizes the number of samples per value of `key`.
///
/// Each class is cut down to the smallest class count. Inside a class the
/// quota is spread round-robin over the `action` values (sorted), then the
/// samples of each action are drawn uniformly with a seeded shuffle. The
/// output keeps the input order of the surviving samples.
pub fn balance_by_label(ds: &Dataset, key: &str, seed: u64) -> Result<Dataset> {
    if ds.is_empty() {
        return Err(Error::Dataset("cannot balance an empty dataset".into()));
    }
    let labels = ds.labels_of(key)?;
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        classes.entry(l.as_str()).or_default().push(i);
    }
    let target = classes.values().map(Vec::len).min().unwrap_or(0);
    let mut rng = rng::seeded(seed);
    let mut keep = Vec::with_capacity(target * classes.len());
    for members in classes.values() {
        let mut by_action: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for &i in members {
            by_action.entry(ds.samples[i].label("action").unwrap_or("")).or_default().push(i);
        }
        let buckets: Vec<Vec<usize>> = by_action.into_values().collect();
        let quota = round_robin_quota(&buckets.iter().map(Vec::len).collect::<Vec<_>>(), target);
        for (mut bucket, q) in buckets.into_iter().zip(quota) {
            bucket.shuffle(&mut rng);
            keep.extend_from_slice(&bucket[..q]);
        }
    }
    keep.sort_unstable();
    let mut out = ds.subset(&keep);
    out.schema_note = format!("{} [balanced by {key}]", ds.schema_note);
    Ok(out)
}

/// Hands out `total` slots one at a time over buckets with spare capacity.
pub(crate) fn round_robin_quota(capacity: &[usize], total: usize) -> Vec<usize> {
    let mut quota = vec![0; capacity.len()];
    let mut left = total.min(capacity.iter().sum());
    while left > 0 {
        for (q, &c) in quota.iter_mut().zip(capacity) {
            if left == 0 {
                break;
            }
            if *q < c {
                *q += 1;
                left -= 1;
            }
        }
    }
    quota
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labeled(device: &str, action: &str, flavor: Flavor) -> TraceSample {
        let mut s = TraceSample::new(vec![PacketRecord::data(0.0, Direction::MasterToSlave, 1)], flavor);
        for k in ["app", "pair"] {
            s.labels.insert(k.into(), String::new());
        }
        s.labels.insert("device".into(), device.into());
        s.labels.insert("action".into(), action.into());
        s.labels.insert("day".into(), "0".into());
        s
    }

    #[test]
    fn parse_single_row() {
        let s = parse_trace_csv("timestamp_s,direction,size_bytes,is_meta\n0.000000,M2S,120,0\n").unwrap();
        assert_eq!(s.packets, vec![PacketRecord::data(0.0, Direction::MasterToSlave, 120)]);
    }

    #[test]
    fn parse_header_only() {
        let s = parse_trace_csv("timestamp_s,direction,size_bytes,is_meta\n").unwrap();
        assert!(s.packets.is_empty());
        assert!(parse_trace_csv(TRACE_HEADER).unwrap().packets.is_empty());
    }

    #[test]
    fn parse_rejects_bad_direction_with_line() {
        let err = parse_trace_csv("timestamp_s,direction,size_bytes,is_meta\n0.000000,X2Y,1,0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn parse_rejects_sub_microsecond_timestamps() {
        let err = parse_trace_csv("timestamp_s,direction,size_bytes,is_meta\n0.000000,M2S,1,0\n\n1.0000004,M2S,1,0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        assert!(err.to_string().contains("precision"));
    }

    #[test]
    fn parse_rejections() {
        let h = "timestamp_s,direction,size_bytes,is_meta\n";
        assert!(matches!(parse_trace_csv("time,dir,size,meta\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_trace_csv(&format!("{h}abc,M2S,1,0\n")), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_trace_csv(&format!("{h}0.0,M2S,-4,0\n")), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(
            parse_trace_csv(&format!("{h}1.0,M2S,4,0\n0.5,M2S,4,0\n")),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(parse_trace_csv(&format!("{h}0.0,M2S,4,1\n")), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn write_fixture_row() {
        let s = TraceSample::unlabeled(vec![PacketRecord::data(1.5, Direction::SlaveToMaster, 46)]);
        assert_eq!(write_trace_csv(&s), "timestamp_s,direction,size_bytes,is_meta\n1.500000,S2M,46,0\n");
        assert_eq!(write_trace_csv(&TraceSample::unlabeled(vec![])), format!("{TRACE_HEADER}\n"));
    }

    #[test]
    fn manifest_duplicate_path() {
        let m = "file,device,app,action,flavor,pair,day\na.csv,D,,,Classic,,0\na.csv,D,,,Classic,,0\n";
        assert!(matches!(Manifest::parse(m), Err(Error::DuplicatePath(p)) if p == "a.csv"));
    }

    #[test]
    fn load_three_rows_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = String::from("file,device,app,action,flavor,pair,day\n");
        for i in 0..3 {
            let s = TraceSample::unlabeled(vec![PacketRecord::data(i as f64, Direction::MasterToSlave, 10 + i)]);
            std::fs::write(dir.path().join(format!("t{i}.csv")), write_trace_csv(&s)).unwrap();
            rows.push_str(&format!("t{i}.csv,Dev{i},App,Open,LowEnergy,P1,{i}\n"));
        }
        let m = Manifest::parse(&rows).unwrap();
        let ds = load_dataset(&m, dir.path()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.samples[2].label("device"), Some("Dev2"));
        assert_eq!(ds.samples[2].label("day"), Some("2"));
        assert_eq!(ds.samples[2].flavor, Flavor::LowEnergy);
        assert!(ds.samples.iter().all(|s| validate_sample(s).is_empty()));

        rows.push_str("absent.csv,D,,,Classic,,0\n");
        let err = load_dataset(&Manifest::parse(&rows).unwrap(), dir.path()).unwrap_err();
        assert!(err.to_string().contains("absent.csv"), "{err}");
    }

    #[test]
    fn flavor_split_sizes() {
        let ds = Dataset::new(
            vec![
                labeled("a", "x", Flavor::Classic),
                labeled("b", "x", Flavor::LowEnergy),
                labeled("c", "x", Flavor::Classic),
            ],
            "",
        );
        let (c, l) = split_by_flavor(&ds);
        assert_eq!((c.len(), l.len()), (2, 1));
        let all_le = Dataset::new(vec![labeled("a", "x", Flavor::LowEnergy); 4], "");
        let (c, l) = split_by_flavor(&all_le);
        assert_eq!((c.len(), l.len()), (0, 4));
        let (c, l) = split_by_flavor(&Dataset::default());
        assert_eq!((c.len(), l.len()), (0, 0));
    }

    fn count(ds: &Dataset, key: &str, value: &str) -> usize {
        ds.samples.iter().filter(|s| s.label(key) == Some(value)).count()
    }

    #[test]
    fn balance_min_count_rule() {
        let mut v = vec![labeled("A", "x", Flavor::Classic); 10];
        v.extend(vec![labeled("B", "x", Flavor::Classic); 4]);
        let out = balance_by_label(&Dataset::new(v, ""), "device", 1).unwrap();
        assert_eq!((count(&out, "device", "A"), count(&out, "device", "B")), (4, 4));
    }

    #[test]
    fn balance_spreads_actions_evenly() {
        // Brute force: every split (kx, ky) of 4 with kx <= 6, ky <= 2;
        // the most even feasible split is (2, 2).
        let best = (0..=4usize)
            .filter(|&kx| kx <= 6 && 4 - kx <= 2)
            .min_by_key(|&kx| (kx as i64 - (4 - kx) as i64).abs())
            .unwrap();
        assert_eq!(best, 2);

        let mut v = vec![labeled("A", "x", Flavor::Classic); 6];
        v.extend(vec![labeled("A", "y", Flavor::Classic); 2]);
        v.extend(vec![labeled("B", "z", Flavor::Classic); 4]);
        let out = balance_by_label(&Dataset::new(v, ""), "device", 9).unwrap();
        let a: Vec<_> = out.samples.iter().filter(|s| s.label("device") == Some("A")).collect();
        assert_eq!(a.iter().filter(|s| s.label("action") == Some("x")).count(), best);
        assert_eq!(a.iter().filter(|s| s.label("action") == Some("y")).count(), 4 - best);
    }

    #[test]
    fn balance_already_balanced_and_empty() {
        let mut v = vec![labeled("A", "x", Flavor::Classic); 5];
        v.extend(vec![labeled("B", "x", Flavor::Classic); 5]);
        let ds = Dataset::new(v, "");
        let out = balance_by_label(&ds, "device", 3).unwrap();
        assert_eq!(out.samples, ds.samples);
        assert!(balance_by_label(&Dataset::default(), "device", 3).is_err());
    }

    #[test]
    fn balance_is_seed_deterministic() {
        let mut v = Vec::new();
        for i in 0..12 {
            let mut s = labeled(if i % 3 == 0 { "B" } else { "A" }, if i % 2 == 0 { "x" } else { "y" }, Flavor::Classic);
            s.packets[0].size = i;
            v.push(s);
        }
        let ds = Dataset::new(v, "");
        let a = balance_by_label(&ds, "device", 5).unwrap();
        let b = balance_by_label(&ds, "device", 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(count(&a, "device", "A"), count(&a, "device", "B"));
    }

    fn arb_sample() -> impl Strategy<Value = TraceSample> {
        proptest::collection::vec((0u64..2_000_000, any::<bool>(), any::<bool>(), 0u32..2000), 0..200).prop_map(|rows| {
            let mut t = 0u64;
            let packets = rows
                .into_iter()
                .map(|(dt, m2s, meta, size)| {
                    t += dt;
                    PacketRecord {
                        timestamp: t as f64 / 1e6,
                        direction: if m2s { Direction::MasterToSlave } else { Direction::SlaveToMaster },
                        size: if meta { 0 } else { size },
                        is_meta: meta,
                    }
                })
                .collect();
            TraceSample::unlabeled(packets)
        })
    }

    proptest! {
        #[test]
        fn write_parse_round_trip(s in arb_sample()) {
            prop_assert!(validate_sample(&s).is_empty());
            let text = write_trace_csv(&s);
            let back = parse_trace_csv(&text).unwrap();
            prop_assert_eq!(&back.packets, &s.packets);
            prop_assert_eq!(write_trace_csv(&back), text);
        }
    }

    #[test]
    fn round_trip_thousand_packets_seeded() {
        use rand::Rng;
        let mut r = rng::seeded(2024);
        let mut t = 0.0;
        let packets: Vec<_> = (0..1000)
            .map(|_| {
                t = crate::trace::quantize_us(t + r.random_range(0.0..0.05));
                PacketRecord::data(t, if r.random_bool(0.5) { Direction::MasterToSlave } else { Direction::SlaveToMaster }, r.random_range(0..1022))
            })
            .collect();
        let s = TraceSample::unlabeled(packets);
        assert!(validate_sample(&s).is_empty());
        assert_eq!(parse_trace_csv(&write_trace_csv(&s)).unwrap().packets, s.packets);
    }
}
