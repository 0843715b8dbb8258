//! Writing synthetic captures to disk.

use std::path::Path;

use anyhow::{anyhow, bail, Result};
use wearlab::ingest::{write_dataset, Manifest};
use wearlab::synth::pack::default_day_plan;
use wearlab::synth::{generate_dataset, generate_day, truth_csv, DayPlan, ProfilePack};
use wearlab::ingest::write_trace_csv;
use wearlab::trace::Flavor;

/// `n` samples of every profile in `group` (optionally one flavor), written
/// as trace files plus `manifest.csv`.
pub fn simulate_group(
    pack: &ProfilePack,
    group: &str,
    flavor: Option<Flavor>,
    n: usize,
    duration: f64,
    seed: u64,
    out: &Path,
) -> Result<Manifest> {
    let profiles = match flavor {
        Some(f) => pack.group_flavor(group, f),
        None => pack.group(group),
    };
    if profiles.is_empty() {
        bail!("profile pack has no {group:?} profiles");
    }
    let ds = generate_dataset(&profiles, n, duration, seed);
    let manifest = write_dataset(&ds, out, "trace_")?;
    std::fs::write(out.join("manifest.csv"), manifest.to_csv())?;
    Ok(manifest)
}

/// One day trace (`day.csv`) and its ground truth (`truth.csv`).
pub fn simulate_day(pack: &ProfilePack, plan: Option<&DayPlan>, seed: u64, out: &Path) -> Result<usize> {
    let default;
    let plan = match plan {
        Some(p) => p,
        None => {
            default = default_day_plan(pack);
            &default
        }
    };
    let (trace, truth) = generate_day(plan, pack, seed).map_err(|e| anyhow!(e))?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("day.csv"), write_trace_csv(&trace))?;
    std::fs::write(out.join("truth.csv"), truth_csv(&truth))?;
    Ok(truth.len())
}
