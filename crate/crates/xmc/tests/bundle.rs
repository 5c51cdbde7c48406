use xmc::bundle::{run_stages, Bundle, Stage, StageStatus};
use xmc::config::{PipelineConfig, SynthConfig};
use xmc::pipeline::{load_data, predict_batch, train_all};
use xmc::XmcError;

fn small() -> PipelineConfig {
    let mut c = PipelineConfig::desk();
    c.data.synth = Some(SynthConfig {
        num_clusters: 4,
        docs_per_cluster: 40,
        labels_per_cluster: 4,
        vocab_per_cluster: 16,
        noise: 0.05,
    });
    c.surrogate.dim = 16;
    c.surrogate.num_clusters = 4;
    c.surrogate.epochs = 2;
    c.extreme.epochs = 2;
    c.reranker.train.epochs = 2;
    c
}

fn statuses(r: &xmc::bundle::RunReport) -> Vec<&'static str> {
    r.stages
        .iter()
        .map(|(_, s)| match s {
            StageStatus::Trained { .. } => "trained",
            StageStatus::Reused => "reused",
            StageStatus::Skipped => "skipped",
        })
        .collect()
}

#[test]
fn rerun_reuses_and_config_change_retrains_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let splits = load_data(&cfg).unwrap();
    let r = run_stages(&splits, &cfg, &Stage::ALL, dir.path(), false, None).unwrap();
    assert_eq!(statuses(&r), ["trained"; 4]);
    let r = run_stages(&splits, &cfg, &Stage::ALL, dir.path(), false, None).unwrap();
    assert_eq!(statuses(&r), ["reused"; 4]);

    let mut changed = cfg.clone();
    changed.extreme.epochs = 3;
    let r = run_stages(&splits, &changed, &Stage::ALL, dir.path(), false, None).unwrap();
    assert_eq!(statuses(&r), ["reused", "reused", "trained", "trained"]);

    let r = run_stages(&splits, &changed, &Stage::ALL, dir.path(), true, None).unwrap();
    assert_eq!(statuses(&r), ["trained"; 4]);
}

#[test]
fn stored_model_predicts_like_the_in_memory_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let splits = load_data(&cfg).unwrap();
    run_stages(&splits, &cfg, &Stage::ALL, dir.path(), false, None).unwrap();
    let b = Bundle::open(dir.path()).unwrap();
    assert_eq!(b.config().unwrap(), cfg);
    let stored = b.inference_model(true).unwrap();
    let mem = train_all(&splits, &cfg, None).unwrap().model;
    let (a, _) = predict_batch(splits.test.features(), &stored, &cfg.predict).unwrap();
    let (m, _) = predict_batch(splits.test.features(), &mem, &cfg.predict).unwrap();
    assert_eq!(a, m);
}

#[test]
fn missing_predecessor_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let splits = load_data(&cfg).unwrap();
    let err = run_stages(&splits, &cfg, &[Stage::Extreme], dir.path(), false, None).unwrap_err();
    assert!(matches!(err, XmcError::StagePrereqMissing { stage: "extreme", missing: "shortlist" }), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn disabled_reranker_is_dropped_from_the_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    run_stages(&load_data(&cfg).unwrap(), &cfg, &Stage::ALL, dir.path(), false, None).unwrap();
    assert!(Bundle::open(dir.path()).unwrap().has(Stage::Rerank));
    cfg.reranker.enabled = false;
    let r = run_stages(&load_data(&cfg).unwrap(), &cfg, &Stage::ALL, dir.path(), false, None).unwrap();
    assert_eq!(statuses(&r), ["reused", "reused", "reused", "skipped"]);
    let b = Bundle::open(dir.path()).unwrap();
    assert!(!b.has(Stage::Rerank));
    assert!(b.inference_model(true).unwrap().reranker.is_none());
}
