use wearlab::eval::{extract_matrix, fit, PipelineConfig};
use wearlab::features::FeatureSchema;
use wearlab::forest::{ForestConfig, TrainedForest};
use wearlab::stream::{classify_stream, find_active_windows, is_noise_label, threshold_grid, threshold_sweep, training_set, Segmenter};
use wearlab::synth::pack::default_day_plan;
use wearlab::synth::{default_pack, generate_day, TruthInterval};
use wearlab::trace::TraceSample;

fn setup() -> (TraceSample, Vec<TruthInterval>, TrainedForest) {
    let pack = default_pack();
    let plan = default_day_plan(&pack);
    let train = training_set(&pack, &plan, 20, 30.0, 2).unwrap();
    let cfg = PipelineConfig {
        schema: FeatureSchema::Action997,
        forest: ForestConfig::default().with_trees(20).with_seed(4),
        ..PipelineConfig::default()
    };
    let model = fit(&extract_matrix(&train, cfg.schema), &train.labels_of("action").unwrap(), &cfg).unwrap();
    let (trace, truth) = generate_day(&plan, &pack, 6).unwrap();
    (trace, truth, model)
}

#[test]
fn default_day_sweep() {
    let (trace, truth, model) = setup();
    assert!(truth.len() > 30);
    let seg = Segmenter::default();
    let rows = threshold_sweep(&trace, &truth, &model, FeatureSchema::Action997, &seg, &threshold_grid(0.0, 0.6, 0.05)).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].score.recall <= w[0].score.recall, "recall rises from T={} to T={}", w[0].threshold, w[1].threshold);
    }
    let at = rows.iter().find(|r| r.threshold == 0.25).unwrap();
    assert!(at.score.f1 >= 0.8, "F1 at T=0.25 is {}", at.score.f1);

    let segments = find_active_windows(&trace, &seg).unwrap();
    let none = classify_stream(&trace, &segments, &model, FeatureSchema::Action997, 1.0).unwrap();
    assert!(none.iter().all(|p| is_noise_label(&p.label)));
    let all = classify_stream(&trace, &segments, &model, FeatureSchema::Action997, 0.0).unwrap();
    assert_eq!(all.len(), segments.len());
    assert!(all.iter().all(|p| p.label != "NoAction"));
}

#[test]
fn every_action_opens_a_segment() {
    let (trace, truth, _) = setup();
    let segments = find_active_windows(&trace, &Segmenter::default()).unwrap();
    let hit = truth.iter().filter(|t| segments.iter().any(|&(a, b)| a < t.end && t.start < b)).count();
    assert_eq!(hit, truth.len());
}
