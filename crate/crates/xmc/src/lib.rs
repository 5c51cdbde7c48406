//! Std companion to `xmc-core`: repository text formats, the XAST tensor
//! container, pipeline configuration, model bundles, rayon-parallel drivers
//! and the `xmc` command line.

pub mod bundle;
pub mod codec;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod xast;
pub mod xc;

pub use error::{Result, XmcError};
