//! One runner per experiment. Runners write their reports into the output
//! directory and return the headline numbers.
//!
//! Seeds: samples come from `derive_named(seed, "data")`, fold assignment
//! from `derive_named(seed, "folds")`, forests from
//! `derive_named(seed, "forest")`, defenses and packet loss from their own
//! named streams.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use wearlab::defenses::{cost_table_csv, defend_dataset, defense_cost_summary, Defense, DummyConfig, DummyMode, SizeSource};
use wearlab::eval::{
    cross_validate, dataset_packet_loss, extract_matrix, fit, holdout_by_key, stratified_split, train_and_score, CvReport,
    EvalReport, PipelineConfig,
};
use wearlab::features::FeatureSchema;
use wearlab::forest::{ForestConfig, TrainedForest};
use wearlab::rng::derive_named;
use wearlab::stream::{classify_stream, find_active_windows, predictions_csv, sweep_csv, threshold_sweep, training_set};
use wearlab::synth::pack::default_day_plan;
use wearlab::synth::{generate_dataset, generate_day, truth_csv, DayPlan, Profile, ProfilePack};
use wearlab::trace::{Dataset, Flavor};

use crate::config::RunConfig;
use crate::report::{Provenance, ReportDir};

pub const EXPERIMENTS: [&str; 10] = [
    "device-id",
    "chipset-id",
    "action-wide",
    "app-deep",
    "diabetes",
    "transfer",
    "aging",
    "loss-sweep",
    "defense",
    "stream",
];

/// Headline numbers keyed by name, plus the files written.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub summary: BTreeMap<String, f64>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn get(&self, key: &str) -> Result<f64> {
        self.summary.get(key).copied().ok_or_else(|| anyhow!("no summary value {key:?}"))
    }
}

/// Parameters an experiment uses when the config leaves them unset.
#[derive(Debug, Clone, Copy)]
struct Defaults {
    samples: usize,
    folds: usize,
    trees: usize,
    rfe_keep: Option<usize>,
    schema: FeatureSchema,
}

fn defaults(name: &str) -> Defaults {
    let d = |samples, folds, trees, rfe_keep, schema| Defaults { samples, folds, trees, rfe_keep, schema };
    match name {
        "device-id" | "chipset-id" => d(25, 10, 10, Some(10), FeatureSchema::Device32),
        "app-deep" => d(40, 10, 30, Some(50), FeatureSchema::Action997),
        "loss-sweep" | "defense" => d(40, 5, 30, Some(50), FeatureSchema::Action997),
        "transfer" | "aging" => d(40, 10, 30, Some(50), FeatureSchema::Action997),
        "stream" => d(30, 10, 30, None, FeatureSchema::Action997),
        _ => d(25, 10, 10, None, FeatureSchema::Action997),
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    pack: ProfilePack,
    reports: ReportDir,
    summary: BTreeMap<String, f64>,
    samples: usize,
    folds: usize,
    pipeline: PipelineConfig,
}

pub fn load_pack(cfg: &RunConfig) -> Result<ProfilePack> {
    match &cfg.pack {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ProfilePack::from_toml(&text).with_context(|| format!("in {}", path.display()))
        }
        None => Ok(wearlab::synth::default_pack()),
    }
}

pub fn run_experiment(name: &str, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    if !EXPERIMENTS.contains(&name) {
        bail!("unknown experiment {name:?}; expected one of {}", EXPERIMENTS.join(", "));
    }
    let d = defaults(name);
    let provenance = Provenance { experiment: name.to_string(), seed: cfg.seed, config_sha256: cfg.digest()? };
    let rfe_keep = match cfg.rfe_keep {
        Some(0) => None,
        Some(k) => Some(k),
        None => d.rfe_keep,
    };
    let mut ctx = Ctx {
        cfg,
        pack: load_pack(cfg)?,
        reports: ReportDir::create(out, provenance)?,
        summary: BTreeMap::new(),
        samples: cfg.samples.unwrap_or(d.samples),
        folds: cfg.folds.unwrap_or(d.folds),
        pipeline: PipelineConfig {
            schema: d.schema,
            forest: ForestConfig::default().with_trees(cfg.trees.unwrap_or(d.trees)).with_seed(derive_named(cfg.seed, "forest")),
            rfe_keep,
            rfe_step: 0.5,
        },
    };
    match name {
        "device-id" => device_id(&mut ctx, false)?,
        "chipset-id" => device_id(&mut ctx, true)?,
        "action-wide" => per_flavor_group(&mut ctx, "wide", "action")?,
        "app-deep" => app_deep(&mut ctx)?,
        "diabetes" => {
            let ds = ctx.dataset("diabetes", None)?;
            ctx.cv_block("", &ds, "action")?;
        }
        "transfer" => transfer(&mut ctx)?,
        "aging" => aging(&mut ctx)?,
        "loss-sweep" => loss_sweep(&mut ctx)?,
        "defense" => defense(&mut ctx)?,
        "stream" => stream(&mut ctx)?,
        _ => unreachable!(),
    }
    let mut text = String::from("key,value\n");
    for (k, v) in &ctx.summary {
        let _ = writeln!(text, "{k},{v:.6}");
    }
    ctx.reports.write("summary.csv", &text)?;
    Ok(Outcome { summary: ctx.summary, files: ctx.reports.written })
}

impl Ctx<'_> {
    fn data_seed(&self) -> u64 {
        derive_named(self.cfg.seed, "data")
    }

    fn profiles(&self, group: &str, flavor: Option<Flavor>) -> Result<Vec<&Profile>> {
        let ps = match flavor {
            Some(f) => self.pack.group_flavor(group, f),
            None => self.pack.group(group),
        };
        if ps.is_empty() {
            bail!("profile pack has no {group:?} profiles");
        }
        Ok(ps)
    }

    fn dataset(&self, group: &str, flavor: Option<Flavor>) -> Result<Dataset> {
        Ok(generate_dataset(&self.profiles(group, flavor)?, self.samples, self.cfg.duration_s, self.data_seed()))
    }

    fn config_note(&self) -> String {
        let p = &self.pipeline;
        format!(
            "schema={:?} trees={} rfe_keep={} folds={} samples={}",
            p.schema,
            p.forest.n_trees,
            p.rfe_keep.map_or("none".to_string(), |k| k.to_string()),
            self.folds,
            self.samples
        )
    }

    fn cross_validate(&self, ds: &Dataset, key: &str) -> Result<CvReport> {
        Ok(cross_validate(ds, key, self.folds, &self.pipeline, derive_named(self.cfg.seed, "folds"), self.cfg.strict)?)
    }

    /// Writes report, confusion and fold scores; records accuracy and F1.
    fn write_cv(&mut self, tag: &str, cv: &CvReport) -> Result<()> {
        let report = cv.pooled.clone().with_config(self.config_note());
        self.reports.write(&format!("{tag}report.csv"), &report.to_csv())?;
        self.reports.write(&format!("{tag}confusion.csv"), &report.confusion_csv())?;
        let mut folds = String::from("fold,macro_precision,macro_recall,macro_f1\n");
        for i in 0..cv.k {
            let _ = writeln!(
                folds,
                "{i},{:.6},{:.6},{:.6}",
                cv.fold_macro_precision[i], cv.fold_macro_recall[i], cv.fold_macro_f1[i]
            );
        }
        self.reports.write(&format!("{tag}folds.csv"), &folds)?;
        self.summary.insert(format!("{tag}macro_f1"), cv.mean_f1);
        self.summary.insert(format!("{tag}std_f1"), cv.std_f1);
        self.summary.insert(format!("{tag}accuracy"), cv.mean_recall);
        self.summary.insert(format!("{tag}classes"), cv.pooled.counts.len() as f64);
        Ok(())
    }

    fn write_importance(&mut self, tag: &str, model: &TrainedForest) -> Result<()> {
        let imp = model.feature_importance();
        let mut text = String::from("feature,importance\n");
        for (name, v) in self.pipeline.schema.names().iter().zip(&imp.values) {
            let _ = writeln!(text, "{name},{v:.6}");
        }
        self.reports.write(&format!("{tag}importance.csv"), &text)?;
        Ok(())
    }

    fn write_eval(&mut self, tag: &str, report: &EvalReport) -> Result<()> {
        let report = report.clone().with_config(self.config_note());
        self.reports.write(&format!("{tag}report.csv"), &report.to_csv())?;
        self.reports.write(&format!("{tag}confusion.csv"), &report.confusion_csv())?;
        self.summary.insert(format!("{tag}macro_f1"), report.macro_f1);
        self.summary.insert(format!("{tag}accuracy"), report.macro_recall);
        Ok(())
    }

    /// Cross-validation plus the importance of a forest fit on everything.
    fn cv_block(&mut self, tag: &str, ds: &Dataset, key: &str) -> Result<()> {
        let cv = self.cross_validate(ds, key)?;
        self.write_cv(tag, &cv)?;
        let model = fit(&extract_matrix(ds, self.pipeline.schema), &ds.labels_of(key)?, &self.pipeline)?;
        self.write_importance(tag, &model)
    }
}

fn flavor_tag(f: Flavor) -> String {
    format!("{}_", f.as_str())
}

fn device_id(ctx: &mut Ctx, chipset: bool) -> Result<()> {
    for flavor in [Flavor::Classic, Flavor::LowEnergy] {
        let mut ds = ctx.dataset("device", Some(flavor))?;
        let key = if chipset {
            ds.relabel("device", "chipset", &ctx.pack.chipsets)?;
            "chipset"
        } else {
            "device"
        };
        ctx.cv_block(&flavor_tag(flavor), &ds, key)?;
    }
    Ok(())
}

fn per_flavor_group(ctx: &mut Ctx, group: &str, key: &str) -> Result<()> {
    for flavor in [Flavor::Classic, Flavor::LowEnergy] {
        if ctx.pack.group_flavor(group, flavor).is_empty() {
            continue;
        }
        let ds = ctx.dataset(group, Some(flavor))?;
        ctx.cv_block(&flavor_tag(flavor), &ds, key)?;
    }
    Ok(())
}

fn app_deep(ctx: &mut Ctx) -> Result<()> {
    for (tag, group) in [("high_", "app-high"), ("low_", "app-low")] {
        let ds = ctx.dataset(group, None)?;
        ctx.cv_block(tag, &ds, "app")?;
        let below = ds.samples.iter().filter(|s| s.total_payload() < 200).count();
        ctx.summary.insert(format!("{tag}share_below_200b"), below as f64 / ds.len() as f64);
    }
    Ok(())
}

fn transfer(ctx: &mut Ctx) -> Result<()> {
    let seed = ctx.cfg.seed;
    let p2_pack = ctx.pack.perturbed(ctx.cfg.transfer.perturbation, derive_named(seed, "pair2"));
    let p2: Vec<Profile> = p2_pack.group("app-high").into_iter().map(|p| p.clone().with_label("pair", "P2")).collect();
    let p2_refs: Vec<&Profile> = p2.iter().collect();
    let mut all = ctx.dataset("app-high", None)?;
    let other = generate_dataset(&p2_refs, ctx.samples, ctx.cfg.duration_s, derive_named(seed, "data-pair2"));
    all.samples.extend(other.samples);

    let (p1, p2) = holdout_by_key(&all, "pair", &["P1"], &["P2"])?;
    let (train, test) = stratified_split(&p1, "app", 0.5, derive_named(seed, "split"))?;
    let (within, model) = train_and_score(&train, &test, "app", &ctx.pipeline)?;
    let pred = wearlab::eval::predict_all(&model, &extract_matrix(&p2, ctx.pipeline.schema))?;
    let cross = wearlab::eval::score(&p2.labels_of("app")?, &pred)?;
    ctx.write_eval("within_", &within)?;
    ctx.write_eval("cross_", &cross)?;
    ctx.write_importance("", &model)?;
    ctx.summary.insert("f1_gap".into(), within.macro_f1 - cross.macro_f1);
    Ok(())
}

fn aging(ctx: &mut Ctx) -> Result<()> {
    let days = ctx.cfg.aging.days.max(1);
    let drift = ctx.cfg.aging.drift_per_day;
    let base: Vec<Profile> = ctx.profiles("app-high", None)?.into_iter().cloned().collect();
    let day_set = |d: usize, seed: u64| {
        let ps: Vec<Profile> = base.iter().map(|p| p.with_gap_factor(1.0 + drift * d as f64).with_label("day", d.to_string())).collect();
        let refs: Vec<&Profile> = ps.iter().collect();
        generate_dataset(&refs, ctx.samples, ctx.cfg.duration_s, seed)
    };
    let mut all = day_set(0, ctx.data_seed());
    for d in 1..days {
        all.samples.extend(day_set(d, derive_named(ctx.data_seed(), &format!("day{d}"))).samples);
    }
    let later: Vec<String> = (1..days).map(|d| d.to_string()).collect();
    let day0 = if days > 1 { holdout_by_key(&all, "day", &["0".to_string()], &later)?.0 } else { all.clone() };
    let (train, test) = stratified_split(&day0, "app", 0.5, derive_named(ctx.cfg.seed, "split"))?;
    let (same_day, model) = train_and_score(&train, &test, "app", &ctx.pipeline)?;
    ctx.write_eval("day0_", &same_day)?;
    let mut table = format!("day,accuracy,macro_f1\n0,{:.6},{:.6}\n", same_day.macro_recall, same_day.macro_f1);
    for d in 1..days {
        let (_, test) = holdout_by_key(&all, "day", &["0".to_string()], &[d.to_string()])?;
        let pred = wearlab::eval::predict_all(&model, &extract_matrix(&test, ctx.pipeline.schema))?;
        let r = wearlab::eval::score(&test.labels_of("app")?, &pred)?;
        let _ = writeln!(table, "{d},{:.6},{:.6}", r.macro_recall, r.macro_f1);
        ctx.write_eval(&format!("day{d}_"), &r)?;
    }
    ctx.reports.write("aging.csv", &table)?;
    ctx.write_importance("", &model)
}

fn loss_sweep(ctx: &mut Ctx) -> Result<()> {
    let ds = ctx.dataset("app-high", None)?;
    let mut table = String::from("loss_rate,accuracy,macro_f1,std_f1\n");
    for &p in &ctx.cfg.loss_rates.clone() {
        let lossy = dataset_packet_loss(&ds, p, derive_named(ctx.cfg.seed, &format!("loss{p}")))?;
        let cv = ctx.cross_validate(&lossy, "app")?;
        let tag = format!("loss{p}_");
        ctx.write_cv(&tag, &cv)?;
        let _ = writeln!(table, "{p},{:.6},{:.6},{:.6}", cv.mean_recall, cv.mean_f1, cv.std_f1);
    }
    ctx.reports.write("loss.csv", &table)?;
    Ok(())
}

pub fn parse_defense(name: &str, mean_w: f64, n_dummies: usize) -> Result<Defense> {
    let one = |n: &str| -> Result<Defense> {
        Ok(match n {
            "none" => Defense::None,
            "pad" => Defense::Pad,
            "delay_group" | "delay-group" => Defense::DelayGroup,
            "add_dummies" | "dummies" => Defense::Dummies(DummyConfig { mean_w, n_dummies, mode: DummyMode::Fixed }),
            other => bail!("unknown defense {other:?}"),
        })
    };
    let parts: Vec<Defense> = name.split('+').map(one).collect::<Result<_>>()?;
    Ok(if parts.len() == 1 { parts.into_iter().next().unwrap() } else { Defense::Chain(parts) })
}

fn defense(ctx: &mut Ctx) -> Result<()> {
    let ds = ctx.dataset("app-high", None)?;
    let source = SizeSource::from_dataset(&ds);
    let base = ctx.cross_validate(&ds, "app")?;
    ctx.write_cv("none_", &base)?;
    let mut rows = vec![defense_cost_summary("none", &ds, &ds, &vec![Default::default(); ds.len()], Some(100.0 * base.mean_recall))?];
    let settings = ctx.cfg.defense.clone();
    for name in &settings.defenses {
        let d = parse_defense(name, settings.mean_w, settings.n_dummies)?;
        let defended = defend_dataset(&ds, &d, &source, derive_named(ctx.cfg.seed, &format!("defense-{name}")))?;
        let cv = ctx.cross_validate(&defended.dataset, "app")?;
        let tag = format!("{}_", d.name());
        ctx.write_cv(&tag, &cv)?;
        let row = defense_cost_summary(&d.name(), &ds, &defended.dataset, &defended.costs, Some(100.0 * cv.mean_recall))?;
        ctx.summary.insert(format!("{tag}delay_per_pkt_s"), row.delay_per_pkt_s);
        ctx.summary.insert(format!("{tag}padding_kb"), row.padding_kb);
        ctx.summary.insert(format!("{tag}dummy_kb"), row.dummy_kb);
        ctx.summary.insert(format!("{tag}overhead_pct"), row.overhead_pct);
        rows.push(row);
    }
    ctx.reports.write("costs.csv", &cost_table_csv(&rows))?;
    Ok(())
}

fn stream(ctx: &mut Ctx) -> Result<()> {
    let plan = match &ctx.cfg.day_plan {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            DayPlan::from_toml(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => default_day_plan(&ctx.pack),
    };
    let settings = &ctx.cfg.stream;
    let train = training_set(&ctx.pack, &plan, settings.train_samples, ctx.cfg.duration_s, ctx.data_seed())?;
    let labels = train.labels_of("action")?;
    let model = fit(&extract_matrix(&train, ctx.pipeline.schema), &labels, &ctx.pipeline)?;
    let (trace, truth) = generate_day(&plan, &ctx.pack, derive_named(ctx.cfg.seed, "day"))?;
    let seg = settings.segmenter;
    let rows = threshold_sweep(&trace, &truth, &model, ctx.pipeline.schema, &seg, &settings.thresholds)?;
    let best = rows
        .iter()
        .max_by(|a, b| a.score.f1.total_cmp(&b.score.f1).then(b.threshold.total_cmp(&a.threshold)))
        .ok_or_else(|| anyhow!("no thresholds to sweep"))?;
    let segments = find_active_windows(&trace, &seg)?;
    let preds = classify_stream(&trace, &segments, &model, ctx.pipeline.schema, best.threshold)?;
    let ceiling = classify_stream(&trace, &segments, &model, ctx.pipeline.schema, 1.0)?;

    ctx.reports.write("sweep.csv", &sweep_csv(&rows))?;
    ctx.reports.write("predictions.csv", &predictions_csv(&preds))?;
    ctx.reports.write("truth.csv", &truth_csv(&truth))?;
    let (best_t, best_f1) = (best.threshold, best.score.f1);
    for r in &rows {
        ctx.summary.insert(format!("T{}_recall", r.threshold), r.score.recall);
        ctx.summary.insert(format!("T{}_precision", r.threshold), r.score.precision);
        ctx.summary.insert(format!("T{}_f1", r.threshold), r.score.f1);
    }
    ctx.summary.insert("best_threshold".into(), best_t);
    ctx.summary.insert("best_f1".into(), best_f1);
    ctx.summary.insert("segments".into(), segments.len() as f64);
    ctx.summary.insert("truth_actions".into(), truth.len() as f64);
    ctx.summary.insert(
        "emissions_at_t1".into(),
        ceiling.iter().filter(|p| !wearlab::stream::is_noise_label(&p.label)).count() as f64,
    );
    ctx.write_importance("", &model)
}
