//! Full pipeline on the planted benchmark, printing held-out metrics.

use std::time::Instant;

use xmc::config::PipelineConfig;
use xmc::pipeline;
use xmc_core::shortlist::Sampler;

fn main() -> xmc::Result<()> {
    let mut cfg = PipelineConfig::desk();
    if let Some(s) = std::env::args().nth(1) {
        cfg.anns.sampler = match s.as_str() {
            "uniform" => Sampler::Uniform,
            "unigram" => Sampler::Unigram,
            _ => Sampler::Anns,
        };
    }
    let t = Instant::now();
    let splits = pipeline::load_data(&cfg)?;
    let mut stdout = std::io::stdout();
    let trained = pipeline::train_all(&splits, &cfg, Some(&mut stdout))?;
    let (preds, lat) = pipeline::predict_batch(splits.test.features(), &trained.model, &cfg.predict)?;
    let rows = pipeline::prediction_rows(&preds);
    let rep = pipeline::evaluate(&rows, &splits.test, &splits.train, &cfg)?;
    let mut base = cfg.clone();
    base.predict.beta = 1.0;
    let base_model = xmc_core::predict::InferenceModel {
        reranker: None,
        ..trained.model.clone()
    };
    let (bp, _) = pipeline::predict_batch(splits.test.features(), &base_model, &base.predict)?;
    let brep = pipeline::evaluate(&pipeline::prediction_rows(&bp), &splits.test, &splits.train, &cfg)?;
    println!("{}", serde_json::to_string(&rep)?);
    println!("base P@1 {:.4} fused P@1 {:.4}", brep.metrics.precision[0], rep.metrics.precision[0]);
    println!("prior P@1 {:.4}", pipeline::frequency_prior_p1(&splits.train, &splits.test));
    println!("latency {:?}", lat);
    println!("stages {:?} total {:?}", trained.stage_ms, t.elapsed());
    Ok(())
}
