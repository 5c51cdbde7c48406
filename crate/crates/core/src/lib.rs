//! Core algorithms for extreme multi-label classification of short text.
//!
//! The pipeline has four stages:
//!
//! - [`surrogate`]: learn token embeddings on a cheap meta-label task built by
//!   recursively clustering labels ([`cluster`]).
//! - [`shortlist`]: freeze those embeddings and mine hard negatives for every
//!   training point with two [`hnsw`] indices (documents and label centroids).
//! - [`extreme`]: learn a spectrally constrained residual block plus one-vs-all
//!   classifiers, touching only shortlisted labels per point.
//! - [`predict`]: log-time inference that fuses classifier, shortlist and
//!   optional [`reranker`] scores.
//!
//! [`metrics`] implements the ranking metrics and [`theorem`] checks the
//! feature-drift and cosine bounds that make frozen shortlists safe to reuse.
//!
//! The crate is `no_std` and needs only `alloc`; file formats, the CLI and
//! parallel drivers live in the `xmc` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adam;
pub mod cluster;
pub mod data;
pub mod dense;
pub mod error;
pub mod extreme;
pub mod hnsw;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod predict;
pub mod reranker;
pub mod shortlist;
pub mod sparse;
pub mod spectral;
pub mod surrogate;
pub mod synth;
pub mod theorem;
pub mod train;

pub use error::{Error, Result};
pub use sparse::SparseVector;
pub use data::{Dataset, DatasetStats};

/// Identifier of a label.
pub type LabelId = u32;
/// Identifier of a feature (token).
pub type FeatureId = u32;
