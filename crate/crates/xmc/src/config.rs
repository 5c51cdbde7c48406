//! Pipeline configuration (JSON, unknown keys rejected) and presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xmc_core::extreme::ExtremeConfig;
use xmc_core::hnsw::HnswParams;
use xmc_core::predict::PredictConfig;
use xmc_core::shortlist::{Caps, Sampler, ShortlistParams};
use xmc_core::surrogate::SurrogateConfig;

use crate::error::{Result, XmcError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_clusters: usize,
    pub docs_per_cluster: usize,
    pub labels_per_cluster: usize,
    pub vocab_per_cluster: usize,
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_clusters: 16,
            docs_per_cluster: 200,
            labels_per_cluster: 8,
            vocab_per_cluster: 32,
            noise: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Generate the training data instead of reading `train`.
    pub synth: Option<SynthConfig>,
    /// Share of synthetic points held out as the test split.
    pub test_fraction: f64,
    pub recompute_tfidf: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurrogateStrategy {
    /// Balanced label clusters as meta-labels.
    Cluster,
    /// The most frequent labels as the surrogate label set.
    Frequent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub strategy: SurrogateStrategy,
    pub correlation: bool,
    pub walks_per_label: usize,
    pub walk_len: usize,
    pub top_k: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            strategy: SurrogateStrategy::Cluster,
            correlation: true,
            walks_per_label: 400,
            walk_len: 2,
            top_k: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnsConfig {
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub doc_neighbors: usize,
    pub caps: Caps,
    pub head_count: usize,
    pub centers_per_head: usize,
    pub sampler: Sampler,
}

impl Default for AnnsConfig {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            ef_search: 200,
            doc_neighbors: 100,
            caps: Caps::default(),
            head_count: 4,
            centers_per_head: 8,
            sampler: Sampler::Anns,
        }
    }
}

impl AnnsConfig {
    pub fn hnsw(&self, seed: u64) -> HnswParams {
        HnswParams {
            m: self.m,
            ef_construction: self.ef_construction,
            seed,
        }
    }

    pub fn shortlist(&self) -> ShortlistParams {
        ShortlistParams {
            caps: self.caps,
            doc_neighbors: self.doc_neighbors,
            ef_search: self.ef_search,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankerConfig {
    pub enabled: bool,
    /// Top predictions mined per training point.
    pub mine_k: usize,
    pub train: ExtremeConfig,
}

impl Default for RerankerConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            mine_k: 10,
            train: ExtremeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub propensity_a: f64,
    pub propensity_b: f64,
    pub ks: Vec<usize>,
    pub quantile_bins: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            propensity_a: 0.55,
            propensity_b: 1.5,
            ks: vec![1, 3, 5],
            quantile_bins: 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub clustering: ClusterConfig,
    pub surrogate: SurrogateConfig,
    pub anns: AnnsConfig,
    pub extreme: ExtremeConfig,
    pub reranker: RerankerConfig,
    pub predict: PredictConfig,
    pub metrics: MetricsConfig,
}

impl PipelineConfig {
    /// Settings sized for the planted benchmark (`synth 16/200/8/32/0.05`).
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.data.synth = Some(SynthConfig::default());
        c.data.test_fraction = 0.2;
        c.surrogate = SurrogateConfig {
            dim: 64,
            num_clusters: 32,
            learning_rate: 0.01,
            batch_size: 64,
            epochs: 15,
            ..SurrogateConfig::default()
        };
        c.anns.caps = Caps {
            doc_route: 16,
            centroid_route: 16,
            random: 4,
            total: 24,
        };
        c.anns.doc_neighbors = 32;
        c.extreme = ExtremeConfig {
            learning_rate: 0.01,
            batch_size: 64,
            epochs: 15,
            ..ExtremeConfig::default()
        };
        c.reranker.train = c.extreme;
        c
    }

    /// Full-scale settings for million-label corpora.
    pub fn full() -> Self {
        let mut c = Self::default();
        c.surrogate.num_clusters = 1 << 16;
        c.surrogate.learning_rate = 0.005;
        c.extreme.learning_rate = 0.002;
        c.anns.m = 100;
        c.anns.ef_construction = 300;
        c.anns.ef_search = 300;
        c.anns.caps = Caps::default();
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            other => Err(XmcError::Config(format!("unknown preset `{other}` (default, desk, full)"))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| XmcError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| XmcError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: xmc_core::Error| XmcError::Config(e.to_string());
        self.surrogate.validate().map_err(wrap)?;
        self.extreme.validate().map_err(wrap)?;
        self.predict.validate().map_err(wrap)?;
        if self.reranker.enabled {
            self.reranker.train.validate().map_err(wrap)?;
        }
        let caps = self.anns.caps;
        if caps.random > 50 || caps.total == 0 {
            return Err(XmcError::Config("anns.caps: random must be <= 50 and total >= 1".into()));
        }
        if self.anns.m < 2 || self.anns.ef_construction == 0 || self.anns.ef_search == 0 {
            return Err(XmcError::Config("anns: m >= 2, ef_construction >= 1, ef_search >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.data.test_fraction) {
            return Err(XmcError::Config("data.test_fraction must lie in [0, 1)".into()));
        }
        if self.metrics.ks.contains(&0) || self.metrics.quantile_bins == 0 {
            return Err(XmcError::Config("metrics: ks and quantile_bins must be >= 1".into()));
        }
        Ok(())
    }
}

/// Hex SHA-256 of any serialisable value's canonical JSON.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("value serialises");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
