//! On-disk model bundle with per-stage content hashes.
//!
//! ```text
//! bundle/
//!   manifest.json   format version, config hash, one hash per finished stage
//!   config.json     the full pipeline config
//!   cluster.json    leaves, depth, seed, surrogate label count, empty labels
//!   surrogate.xast  intermediate embeddings
//!   shortlist.xast  shortlister and the training shortlists
//!   extreme.xast    base network
//!   rerank.xast     re-ranker network and trained-label mask
//! ```
//!
//! A stage hash covers the training data, the settings that stage reads and
//! the hash of the stage before it, so changing anything upstream
//! invalidates everything downstream.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xmc_core::cluster::MetaLabelMap;
use xmc_core::nn::EmbeddingBank;
use xmc_core::predict::InferenceModel;
use xmc_core::reranker::RerankerModel;
use xmc_core::train::Network;
use xmc_core::{Dataset, LabelId};

use crate::codec;
use crate::config::{hash_json, PipelineConfig};
use crate::error::{Result, XmcError};
use crate::pipeline::{self, ClusterStage, EpochRecord, JsonLog, ShortlistStage, Splits};
use crate::xast::Container;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Surrogate,
    Shortlist,
    Extreme,
    Rerank,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Surrogate, Stage::Shortlist, Stage::Extreme, Stage::Rerank];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Surrogate => "surrogate",
            Stage::Shortlist => "shortlist",
            Stage::Extreme => "extreme",
            Stage::Rerank => "rerank",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| XmcError::Config(format!("unknown stage `{s}` (surrogate, shortlist, extreme, rerank)")))
    }

    fn file(self) -> &'static str {
        match self {
            Stage::Surrogate => "surrogate.xast",
            Stage::Shortlist => "shortlist.xast",
            Stage::Extreme => "extreme.xast",
            Stage::Rerank => "rerank.xast",
        }
    }

    fn prev(self) -> Option<Stage> {
        match self {
            Stage::Surrogate => None,
            Stage::Shortlist => Some(Stage::Surrogate),
            Stage::Extreme => Some(Stage::Shortlist),
            Stage::Rerank => Some(Stage::Extreme),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub data_hash: String,
    pub stages: BTreeMap<Stage, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub leaves: Vec<Vec<LabelId>>,
    pub depth: usize,
    pub seed: u64,
    pub num_clusters: usize,
    pub empty_labels: Vec<LabelId>,
    pub label_to_cluster: Vec<u32>,
    pub warnings: Vec<String>,
}

impl ClusterSummary {
    fn from_stage(c: &ClusterStage, seed: u64) -> Self {
        match &c.tree {
            Some(t) => Self {
                leaves: t.leaves.clone(),
                depth: t.depth,
                seed: t.seed,
                num_clusters: t.num_clusters(),
                empty_labels: t.empty_labels.clone(),
                label_to_cluster: c.meta.label_to_cluster.clone(),
                warnings: c.warnings.clone(),
            },
            None => Self {
                leaves: Vec::new(),
                depth: 0,
                seed,
                num_clusters: c.meta.num_clusters,
                empty_labels: Vec::new(),
                label_to_cluster: c.meta.label_to_cluster.clone(),
                warnings: c.warnings.clone(),
            },
        }
    }
}

struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a dataset in the sparse text format.
pub fn hash_dataset(d: &Dataset) -> String {
    let mut w = HashWriter(Sha256::new());
    crate::xc::write_xc(d, &mut w).expect("hashing never fails");
    hex(&w.0.finalize())
}

fn stage_settings(stage: Stage, cfg: &PipelineConfig) -> serde_json::Value {
    use serde_json::json;
    match stage {
        Stage::Surrogate => json!({"seed": cfg.seed, "clustering": cfg.clustering, "surrogate": cfg.surrogate}),
        Stage::Shortlist => json!({"seed": cfg.seed, "anns": cfg.anns}),
        Stage::Extreme => json!({"seed": cfg.seed, "extreme": cfg.extreme}),
        Stage::Rerank => json!({"seed": cfg.seed, "reranker": cfg.reranker, "predict": cfg.predict}),
    }
}

/// Chained hash of every stage for this config and training data.
pub fn stage_hashes(cfg: &PipelineConfig, data_hash: &str) -> BTreeMap<Stage, String> {
    let mut out = BTreeMap::new();
    let mut prev = data_hash.to_string();
    for st in Stage::ALL {
        let h = hash_json(&(st.name(), &prev, stage_settings(st, cfg)));
        out.insert(st, h.clone());
        prev = h;
    }
    out
}

pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Bundle {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let manifest = if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| XmcError::io(&path, e))?;
            let m: Manifest = serde_json::from_str(&text)?;
            if m.format_version != FORMAT_VERSION {
                return Err(XmcError::IncompleteBundle(format!("unsupported format version {}", m.format_version)));
            }
            m
        } else {
            Manifest {
                format_version: FORMAT_VERSION,
                ..Manifest::default()
            }
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_manifest(&self) -> Result<()> {
        let path = self.path("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&path, text).map_err(|e| XmcError::io(&path, e))
    }

    pub fn has(&self, st: Stage) -> bool {
        self.manifest.stages.contains_key(&st) && self.path(st.file()).exists()
    }

    pub fn config(&self) -> Result<PipelineConfig> {
        PipelineConfig::load(&self.path("config.json"))
    }

    fn load(&self, st: Stage) -> Result<Container> {
        if !self.has(st) {
            return Err(XmcError::IncompleteBundle(format!("{} has not been trained", st.name())));
        }
        Container::load(&self.path(st.file()))
    }

    pub fn embeddings(&self) -> Result<EmbeddingBank> {
        codec::get_embeddings(&self.load(Stage::Surrogate)?, "surrogate")
    }

    pub fn clusters(&self) -> Result<ClusterSummary> {
        let path = self.path("cluster.json");
        let text = std::fs::read_to_string(&path).map_err(|e| XmcError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn shortlists(&self) -> Result<ShortlistStage> {
        let c = self.load(Stage::Shortlist)?;
        Ok(ShortlistStage {
            shortlister: codec::get_shortlister(&c, "shortlister")?,
            anns: codec::get_shortlist(&c, "anns")?,
            train: codec::get_shortlist(&c, "train")?,
        })
    }

    pub fn extreme(&self) -> Result<Network> {
        codec::get_network(&self.load(Stage::Extreme)?, "extreme")
    }

    pub fn reranker(&self) -> Result<RerankerModel> {
        codec::get_reranker(&self.load(Stage::Rerank)?, "rerank")
    }

    /// Inference model; the re-ranker is attached when present and enabled.
    pub fn inference_model(&self, use_reranker: bool) -> Result<InferenceModel> {
        let shortlister = self.shortlists()?.shortlister;
        Ok(InferenceModel {
            shortlist_embeddings: self.embeddings()?,
            base: self.extreme()?,
            reranker: if use_reranker && self.has(Stage::Rerank) { Some(self.reranker()?) } else { None },
            shortlister,
        })
    }
}

/// What happened to each stage during [`run_stages`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Trained { ms: u128 },
    Reused,
    Skipped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub stages: Vec<(Stage, StageStatus)>,
    pub log: Vec<EpochRecord>,
}

fn reborrow<'s>(o: &'s mut Option<&mut dyn Write>) -> Option<&'s mut dyn Write> {
    match o {
        Some(w) => Some(&mut **w),
        None => None,
    }
}

/// Train the requested stages into `dir`, reusing any stage whose stored hash
/// still matches. A requested stage whose predecessor is neither requested
/// nor up to date fails with `StagePrereqMissing`.
pub fn run_stages(
    splits: &Splits,
    cfg: &PipelineConfig,
    requested: &[Stage],
    dir: &Path,
    force: bool,
    mut out: Option<&mut dyn Write>,
) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| XmcError::io(dir, e))?;
    let mut b = Bundle::open(dir)?;
    let data_hash = hash_dataset(&splits.train);
    let want = stage_hashes(cfg, &data_hash);
    let cfg_path = b.path("config.json");
    std::fs::write(&cfg_path, cfg.to_json()).map_err(|e| XmcError::io(&cfg_path, e))?;
    b.manifest.config_hash = hash_json(cfg);
    b.manifest.data_hash = data_hash;

    let fresh = |b: &Bundle, st: Stage| b.has(st) && b.manifest.stages.get(&st) == want.get(&st);
    let mut report = RunReport {
        stages: Vec::new(),
        log: Vec::new(),
    };
    for st in Stage::ALL {
        if st == Stage::Rerank && !cfg.reranker.enabled {
            b.manifest.stages.remove(&st);
            report.stages.push((st, StageStatus::Skipped));
            continue;
        }
        if !requested.contains(&st) {
            if !fresh(&b, st) {
                b.manifest.stages.remove(&st);
            }
            report.stages.push((st, StageStatus::Skipped));
            continue;
        }
        if let Some(p) = st.prev() {
            if !fresh(&b, p) {
                b.write_manifest()?;
                return Err(XmcError::StagePrereqMissing {
                    stage: st.name(),
                    missing: p.name(),
                });
            }
        }
        if !force && fresh(&b, st) {
            report.stages.push((st, StageStatus::Reused));
            continue;
        }
        b.manifest.stages.remove(&st);
        let t = Instant::now();
        let mut log = JsonLog::new(st.name(), reborrow(&mut out));
        train_stage(&b, st, splits, cfg, &mut log).map_err(|e| e.in_stage(st.name()))?;
        report.log.append(&mut log.lines);
        b.manifest.stages.insert(st, want[&st].clone());
        b.write_manifest()?;
        report.stages.push((st, StageStatus::Trained { ms: t.elapsed().as_millis() }));
    }
    b.write_manifest()?;
    Ok(report)
}

fn train_stage(b: &Bundle, st: Stage, splits: &Splits, cfg: &PipelineConfig, log: &mut JsonLog) -> Result<()> {
    let train = &splits.train;
    let mut c = Container::new();
    match st {
        Stage::Surrogate => {
            let clusters = pipeline::run_clustering(train, cfg)?;
            for w in &clusters.warnings {
                eprintln!("warning: {w}");
            }
            let path = b.path("cluster.json");
            let summary = ClusterSummary::from_stage(&clusters, cfg.seed);
            std::fs::write(&path, serde_json::to_string(&summary)?).map_err(|e| XmcError::io(&path, e))?;
            let s = pipeline::run_surrogate(train, &clusters, cfg, log)?;
            codec::put_embeddings(&mut c, "surrogate", &s.model.embeddings)?;
        }
        Stage::Shortlist => {
            let s = pipeline::run_shortlist(train, &b.embeddings()?, cfg)?;
            codec::put_shortlister(&mut c, "shortlister", &s.shortlister)?;
            codec::put_shortlist(&mut c, "anns", &s.anns)?;
            codec::put_shortlist(&mut c, "train", &s.train)?;
        }
        Stage::Extreme => {
            let e = b.embeddings()?;
            let sl = b.shortlists()?;
            let out = pipeline::run_extreme(train, Some(&splits.test), &e, &sl, cfg, log)?;
            codec::put_network(&mut c, "extreme", &out.model)?;
        }
        Stage::Rerank => {
            let model = b.inference_model(false)?;
            let out = pipeline::run_reranker(train, &model, cfg, log)?;
            codec::put_reranker(&mut c, "rerank", &out.model)?;
        }
    }
    c.save(&b.path(st.file()))
}

/// Meta-label map rebuilt from a stored cluster summary.
pub fn meta_labels(summary: &ClusterSummary, train: &Dataset) -> Result<MetaLabelMap> {
    Ok(xmc_core::cluster::meta_labels_from_map(
        train,
        summary.label_to_cluster.clone(),
        summary.num_clusters,
    )?)
}
