//! The four training stages plus prediction and evaluation, in memory.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xmc_core::cluster::{self, ClusterTree, MetaLabelMap};
use xmc_core::extreme::{self, ExtremeOutcome};
use xmc_core::hnsw::Scratch;
use xmc_core::metrics::{self, MetricReport, PropensityModel};
use xmc_core::nn::EmbeddingBank;
use xmc_core::predict::{self, InferenceModel, PredictConfig, Prediction, ShortlistP1Hook};
use xmc_core::reranker::{self, RerankerOutcome};
use xmc_core::shortlist::{self, Entry, Sampler, Shortlist, Shortlister};
use xmc_core::surrogate::{self, SurrogateOutcome};
use xmc_core::synth::{synth_dataset, SynthParams};
use xmc_core::train::{EpochLog, TrainHooks};
use xmc_core::{Dataset, LabelId, SparseVector};

use crate::config::{PipelineConfig, SurrogateStrategy};
use crate::error::{Result, XmcError};

pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

fn read_xc(path: &std::path::Path) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| XmcError::io(path, e))?;
    let (d, rep) = crate::xc::parse_xc(std::io::BufReader::new(f))?;
    if rep.duplicate_labels > 0 {
        eprintln!("warning: {}: {} duplicate label ids dropped", path.display(), rep.duplicate_labels);
    }
    Ok(d)
}

/// Train/test data from files or from the synthetic generator (split by a
/// seeded shuffle).
pub fn load_data(cfg: &PipelineConfig) -> Result<Splits> {
    let mut splits = if let Some(s) = &cfg.data.synth {
        let syn = synth_dataset(SynthParams::new(
            s.num_clusters,
            s.docs_per_cluster,
            s.labels_per_cluster,
            s.vocab_per_cluster,
            s.noise,
            cfg.seed,
        ))?;
        split(&syn.dataset, cfg.data.test_fraction, cfg.seed)
    } else {
        let train_path = cfg
            .data
            .train
            .as_deref()
            .ok_or_else(|| XmcError::Config("data.train or data.synth is required".into()))?;
        let train = read_xc(train_path)?;
        let test = match &cfg.data.test {
            Some(p) => read_xc(p)?,
            None => train.subset(&[]),
        };
        Splits { train, test }
    };
    if cfg.data.recompute_tfidf {
        splits.train.recompute_tfidf();
        splits.test.recompute_tfidf();
    }
    Ok(splits)
}

/// Seeded shuffle split; `test_fraction` of the points go to the test side.
pub fn split(d: &Dataset, test_fraction: f64, seed: u64) -> Splits {
    let order = xmc_core::train::epoch_order(d.num_points(), seed ^ 0x5_911f, 0);
    let n_test = (d.num_points() as f64 * test_fraction).round() as usize;
    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut train: Vec<usize> = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Splits {
        train: d.subset(&train),
        test: d.subset(&test),
    }
}

/// JSON-lines epoch log sink.
pub struct JsonLog<'a> {
    pub stage: &'static str,
    pub out: Option<&'a mut dyn Write>,
    pub start: Instant,
    pub lines: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: String,
    pub epoch: usize,
    pub mean_loss: f64,
    pub heldout_p1: Option<f64>,
    pub wall_ms: u128,
}

impl<'a> JsonLog<'a> {
    pub fn new(stage: &'static str, out: Option<&'a mut dyn Write>) -> Self {
        Self {
            stage,
            out,
            start: Instant::now(),
            lines: Vec::new(),
        }
    }
}

impl TrainHooks for JsonLog<'_> {
    fn on_epoch(&mut self, log: &EpochLog) {
        let rec = EpochRecord {
            stage: self.stage.to_string(),
            epoch: log.epoch,
            mean_loss: log.mean_loss,
            heldout_p1: log.heldout_p1,
            wall_ms: self.start.elapsed().as_millis(),
        };
        if let Some(w) = self.out.as_deref_mut() {
            let _ = writeln!(w, "{}", serde_json::to_string(&rec).expect("record serialises"));
        }
        self.lines.push(rec);
    }
}

#[derive(Debug, Clone)]
pub struct ClusterStage {
    pub tree: Option<ClusterTree>,
    pub meta: MetaLabelMap,
    pub warnings: Vec<String>,
}

pub fn run_clustering(train: &Dataset, cfg: &PipelineConfig) -> Result<ClusterStage> {
    let mut warnings = Vec::new();
    let non_empty = train.label_frequencies().iter().filter(|&&f| f > 0).count();
    let mut k = cfg.surrogate.num_clusters;
    if k > non_empty {
        warnings.push(format!("surrogate.num_clusters = {k} exceeds the {non_empty} non-empty labels; using {non_empty}"));
        k = non_empty;
    }
    match cfg.clustering.strategy {
        SurrogateStrategy::Cluster => {
            let cent = cluster::compute_centroids(train);
            let corr = if cfg.clustering.correlation {
                Some(cluster::estimate_correlation(
                    train,
                    cfg.clustering.walks_per_label,
                    cfg.clustering.walk_len,
                    cfg.clustering.top_k,
                    cfg.seed,
                )?)
            } else {
                None
            };
            let tree = cluster::build_cluster_tree(&cent, corr.as_ref(), k, cfg.seed)?;
            let meta = cluster::make_meta_labels(train, &tree)?;
            Ok(ClusterStage {
                tree: Some(tree),
                meta,
                warnings,
            })
        }
        SurrogateStrategy::Frequent => {
            let sel = cluster::select_frequent_labels(train, k)?;
            let mut map = vec![u32::MAX; train.num_labels()];
            for (c, &l) in sel.labels.iter().enumerate() {
                map[l as usize] = c as u32;
            }
            let meta = train
                .labels()
                .iter()
                .map(|ls| {
                    let mut m: Vec<u32> = ls.iter().map(|&l| map[l as usize]).filter(|&c| c != u32::MAX).collect();
                    m.sort_unstable();
                    m
                })
                .collect();
            Ok(ClusterStage {
                tree: None,
                meta: MetaLabelMap {
                    num_clusters: k,
                    label_to_cluster: map,
                    meta,
                },
                warnings,
            })
        }
    }
}

pub fn run_surrogate(train: &Dataset, clusters: &ClusterStage, cfg: &PipelineConfig, log: &mut JsonLog) -> Result<SurrogateOutcome> {
    let mut sc = cfg.surrogate;
    sc.num_clusters = clusters.meta.num_clusters;
    sc.seed = cfg.seed;
    Ok(surrogate::train_surrogate(train, &clusters.meta, &sc, None, log)?)
}

#[derive(Debug, Clone)]
pub struct ShortlistStage {
    pub shortlister: Shortlister,
    /// ANNS training shortlists.
    pub anns: Shortlist,
    /// What stage four trains on: `anns`, or a matched-size sampled baseline.
    pub train: Shortlist,
}

pub fn build_shortlister(train: &Dataset, e: &EmbeddingBank, cfg: &PipelineConfig) -> Result<(Shortlister, shortlist::CorpusEmbedding)> {
    let corpus = shortlist::embed_corpus(train, e)?;
    let reps = shortlist::label_representatives(train, &corpus, cfg.anns.head_count, cfg.anns.centers_per_head, cfg.seed);
    let s = Shortlister::build(train, &corpus, &reps, cfg.anns.hnsw(cfg.seed), cfg.anns.shortlist())?;
    Ok((s, corpus))
}

/// Training shortlists for every point, in parallel. Per-point random
/// streams make the result independent of scheduling.
pub fn training_shortlists(s: &Shortlister, train: &Dataset, corpus: &shortlist::CorpusEmbedding, seed: u64) -> Shortlist {
    let rows = (0..train.num_points())
        .into_par_iter()
        .map_init(Scratch::default, |scratch, i| {
            let mut rng = shortlist::point_rng(seed, i);
            s.shortlist_point(corpus.unit_row(i), Some(train.point_labels(i)), Some(i as u32), &mut rng, scratch)
        })
        .collect();
    Shortlist {
        num_labels: train.num_labels(),
        rows,
    }
}

pub fn run_shortlist(train: &Dataset, e: &EmbeddingBank, cfg: &PipelineConfig) -> Result<ShortlistStage> {
    let (shortlister, corpus) = build_shortlister(train, e, cfg)?;
    let anns = training_shortlists(&shortlister, train, &corpus, cfg.seed);
    let train_sl = match cfg.anns.sampler {
        Sampler::Anns => anns.clone(),
        other => {
            let sizes: Vec<usize> = anns.rows.iter().map(Vec::len).collect();
            shortlist::sampled_shortlists(train, &sizes, other, cfg.seed)?
        }
    };
    Ok(ShortlistStage {
        shortlister,
        anns,
        train: train_sl,
    })
}

/// Prediction-mode shortlists for arbitrary documents.
pub fn query_shortlists(s: &Shortlister, e: &EmbeddingBank, xs: &[SparseVector]) -> Result<Vec<Vec<Entry>>> {
    xs.par_iter()
        .map_init(Scratch::default, |scratch, x| {
            let q = predict::query_vector(x, e)?;
            let mut rng = shortlist::point_rng(0, 0);
            Ok(s.shortlist_point(&q, None, None, &mut rng, scratch))
        })
        .collect()
}

pub fn run_extreme(
    train: &Dataset,
    heldout: Option<&Dataset>,
    e: &EmbeddingBank,
    stage: &ShortlistStage,
    cfg: &PipelineConfig,
    log: &mut JsonLog,
) -> Result<ExtremeOutcome> {
    let mut ec = cfg.extreme;
    ec.seed = cfg.seed;
    match heldout.filter(|h| h.num_points() > 0) {
        Some(h) => {
            let rows = query_shortlists(&stage.shortlister, e, h.features())?;
            let mut hook = ShortlistP1Hook {
                data: h,
                shortlists: &rows,
                alpha: cfg.predict.alpha,
                inner: Some(log),
            };
            Ok(extreme::train_extreme(train, e.clone(), &stage.train, &ec, &mut hook)?)
        }
        None => Ok(extreme::train_extreme(train, e.clone(), &stage.train, &ec, log)?),
    }
}

pub fn run_reranker(train: &Dataset, model: &InferenceModel, cfg: &PipelineConfig, log: &mut JsonLog) -> Result<RerankerOutcome> {
    let base_only = InferenceModel {
        reranker: None,
        ..model.clone()
    };
    let pc = PredictConfig {
        top_k: cfg.reranker.mine_k.max(1),
        ..cfg.predict
    };
    let (preds, _) = predict_batch(train.features(), &base_only, &pc)?;
    let ts = reranker::mine_mispredictions(train, &preds, cfg.reranker.mine_k)?;
    let mut rc = cfg.reranker.train;
    rc.seed = cfg.seed.wrapping_add(1);
    Ok(reranker::train_reranker(train, &model.shortlist_embeddings, &ts, &rc, log)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub points: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p99_us: f64,
    pub max_shortlist_len: usize,
    pub shortlist_cap: usize,
    pub cap_respected: bool,
    pub empty_documents: usize,
    /// Rows with fewer than `top_k` labels.
    pub short_rows: usize,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Parallel prediction with per-point wall time.
pub fn predict_batch(xs: &[SparseVector], model: &InferenceModel, cfg: &PredictConfig) -> Result<(Vec<Prediction>, LatencyReport)> {
    let timed: Vec<(Prediction, f64)> = xs
        .par_iter()
        .map_init(Scratch::default, |scratch, x| {
            let t = Instant::now();
            let p = predict::predict(x, model, cfg, scratch)?;
            Ok((p, t.elapsed().as_secs_f64() * 1e6))
        })
        .collect::<Result<_, xmc_core::Error>>()?;
    let mut times: Vec<f64> = timed.iter().map(|t| t.1).collect();
    times.sort_by(f64::total_cmp);
    let preds: Vec<Prediction> = timed.into_iter().map(|t| t.0).collect();
    let cap = model.shortlister.params.caps.total;
    let max_len = preds.iter().map(|p| p.shortlist_len).max().unwrap_or(0);
    let report = LatencyReport {
        points: preds.len(),
        mean_us: if times.is_empty() { 0.0 } else { times.iter().sum::<f64>() / times.len() as f64 },
        p50_us: percentile(&times, 0.5),
        p99_us: percentile(&times, 0.99),
        max_shortlist_len: max_len,
        shortlist_cap: cap,
        cap_respected: max_len <= cap,
        empty_documents: preds.iter().filter(|p| p.empty_document).count(),
        short_rows: preds.iter().filter(|p| p.labels.len() < cfg.top_k).count(),
    };
    Ok((preds, report))
}

pub fn prediction_rows(preds: &[Prediction]) -> Vec<Vec<(LabelId, f64)>> {
    preds.iter().map(|p| p.labels.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(flatten)]
    pub metrics: MetricReport,
    /// P@k contribution of each label-frequency bin (bin 0 = head), for the
    /// largest configured k.
    pub quantile_k: usize,
    pub quantiles: Vec<f64>,
}

pub fn evaluate(preds: &[Vec<(LabelId, f64)>], truth: &Dataset, train: &Dataset, cfg: &PipelineConfig) -> Result<EvaluationReport> {
    let m = &cfg.metrics;
    let mut prop = metrics::propensities(train, m.propensity_a, m.propensity_b)?;
    if prop.p.len() < truth.num_labels() {
        prop.p.resize(truth.num_labels(), PropensityModel::from_frequencies(&[0], train.num_points(), m.propensity_a, m.propensity_b)?.p[0]);
    }
    let report = metrics::evaluate(preds, truth.labels(), &prop, &m.ks)?;
    let qk = m.ks.iter().copied().max().unwrap_or(5);
    let mut freq = train.label_frequencies();
    freq.resize(freq.len().max(truth.num_labels()), 0);
    let quantiles = metrics::quantile_breakdown(preds, truth.labels(), &freq, m.quantile_bins, qk)?;
    Ok(EvaluationReport {
        metrics: report,
        quantile_k: qk,
        quantiles,
    })
}

/// P@1 of always predicting the most frequent training label.
pub fn frequency_prior_p1(train: &Dataset, test: &Dataset) -> f64 {
    let freq = train.label_frequencies();
    let best = (0..freq.len()).max_by(|&a, &b| freq[a].cmp(&freq[b]).then(b.cmp(&a))).unwrap_or(0) as LabelId;
    let rows: Vec<Vec<(LabelId, f64)>> = (0..test.num_points()).map(|_| vec![(best, 1.0)]).collect();
    let prop = PropensityModel::uniform(test.num_labels());
    metrics::evaluate(&rows, test.labels(), &prop, &[1]).map(|r| r.precision[0]).unwrap_or(0.0)
}

fn reborrow<'s>(o: &'s mut Option<&mut dyn Write>) -> Option<&'s mut dyn Write> {
    match o {
        Some(w) => Some(&mut **w),
        None => None,
    }
}

/// All stages in memory.
pub struct Trained {
    pub clusters: ClusterStage,
    pub surrogate: SurrogateOutcome,
    pub shortlists: ShortlistStage,
    pub extreme: ExtremeOutcome,
    pub reranker: Option<RerankerOutcome>,
    pub model: InferenceModel,
    pub log: Vec<EpochRecord>,
    pub stage_ms: Vec<(String, u128)>,
}

pub fn train_all(splits: &Splits, cfg: &PipelineConfig, mut out: Option<&mut dyn Write>) -> Result<Trained> {
    cfg.validate()?;
    let mut stage_ms = Vec::new();
    let mut records = Vec::new();
    let t = Instant::now();
    let clusters = run_clustering(&splits.train, cfg).map_err(|e| e.in_stage("cluster"))?;
    for w in &clusters.warnings {
        eprintln!("warning: {w}");
    }
    stage_ms.push(("cluster".to_string(), t.elapsed().as_millis()));

    let t = Instant::now();
    let mut log = JsonLog::new("surrogate", reborrow(&mut out));
    let surrogate = run_surrogate(&splits.train, &clusters, cfg, &mut log).map_err(|e| e.in_stage("surrogate"))?;
    records.append(&mut log.lines);
    stage_ms.push(("surrogate".to_string(), t.elapsed().as_millis()));

    let e = &surrogate.model.embeddings;
    let t = Instant::now();
    let shortlists = run_shortlist(&splits.train, e, cfg).map_err(|e| e.in_stage("shortlist"))?;
    stage_ms.push(("shortlist".to_string(), t.elapsed().as_millis()));

    let t = Instant::now();
    let mut log = JsonLog::new("extreme", reborrow(&mut out));
    let extreme = run_extreme(&splits.train, Some(&splits.test), e, &shortlists, cfg, &mut log).map_err(|e| e.in_stage("extreme"))?;
    records.append(&mut log.lines);
    stage_ms.push(("extreme".to_string(), t.elapsed().as_millis()));

    let mut model = InferenceModel {
        shortlist_embeddings: e.clone(),
        base: extreme.model.clone(),
        reranker: None,
        shortlister: shortlists.shortlister.clone(),
    };
    let reranker = if cfg.reranker.enabled {
        let t = Instant::now();
        let mut log = JsonLog::new("rerank", reborrow(&mut out));
        let r = run_reranker(&splits.train, &model, cfg, &mut log).map_err(|e| e.in_stage("rerank"))?;
        records.append(&mut log.lines);
        stage_ms.push(("rerank".to_string(), t.elapsed().as_millis()));
        model.reranker = Some(r.model.clone());
        Some(r)
    } else {
        None
    };
    Ok(Trained {
        clusters,
        surrogate,
        shortlists,
        extreme,
        reranker,
        model,
        log: records,
        stage_ms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationArm {
    pub sampler: Sampler,
    pub precision_at_1: f64,
    pub mean_negatives: f64,
}

/// Stage four retrained with each negative source on the same embeddings and
/// shortlister, scored without the re-ranker on the test split.
pub fn ablate_sampler(splits: &Splits, cfg: &PipelineConfig) -> Result<Vec<AblationArm>> {
    cfg.validate()?;
    let clusters = run_clustering(&splits.train, cfg)?;
    let surrogate = run_surrogate(&splits.train, &clusters, cfg, &mut JsonLog::new("surrogate", None))?;
    let e = &surrogate.model.embeddings;
    let (shortlister, corpus) = build_shortlister(&splits.train, e, cfg)?;
    let anns = training_shortlists(&shortlister, &splits.train, &corpus, cfg.seed);
    let sizes: Vec<usize> = anns.rows.iter().map(Vec::len).collect();
    let mut arms = Vec::new();
    for sampler in [Sampler::Anns, Sampler::Uniform, Sampler::Unigram] {
        let train = match sampler {
            Sampler::Anns => anns.clone(),
            other => shortlist::sampled_shortlists(&splits.train, &sizes, other, cfg.seed)?,
        };
        let negatives: usize = train
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().filter(|e| !splits.train.is_positive(i, e.label)).count())
            .sum();
        let stage = ShortlistStage {
            shortlister: shortlister.clone(),
            anns: anns.clone(),
            train,
        };
        let ext = run_extreme(&splits.train, None, e, &stage, cfg, &mut JsonLog::new("extreme", None))?;
        let model = InferenceModel {
            shortlist_embeddings: e.clone(),
            base: ext.model,
            reranker: None,
            shortlister: shortlister.clone(),
        };
        let (preds, _) = predict_batch(splits.test.features(), &model, &cfg.predict)?;
        let rep = evaluate(&prediction_rows(&preds), &splits.test, &splits.train, cfg)?;
        arms.push(AblationArm {
            sampler,
            precision_at_1: rep.metrics.precision_at(1).unwrap_or(0.0),
            mean_negatives: negatives as f64 / splits.train.num_points().max(1) as f64,
        });
    }
    Ok(arms)
}
