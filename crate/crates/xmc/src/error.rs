use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum XmcError {
    #[error(transparent)]
    Core(#[from] xmc_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: id {id} out of range")]
    IndexOutOfRange { line: usize, id: u64 },
    #[error("line {line}: non-finite value")]
    NonFiniteValue { line: usize },
    #[error("line {line}: duplicate feature {id}")]
    DuplicateFeature { line: usize, id: u32 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("expected {expected} rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("container: {0}")]
    Container(String),
    #[error("config: {0}")]
    Config(String),
    #[error("stage `{stage}` needs `{missing}` to have run first")]
    StagePrereqMissing { stage: &'static str, missing: &'static str },
    #[error("bundle is incomplete: {0}")]
    IncompleteBundle(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<XmcError>,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = XmcError> = std::result::Result<T, E>;

impl XmcError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Self::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// 2 config, 3 data, 4 numeric, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use xmc_core::Error as C;
        match self {
            Self::Stage { source, .. } => source.exit_code(),
            Self::Config(_) | Self::StagePrereqMissing { .. } | Self::IncompleteBundle(_) | Self::Json(_) => 2,
            Self::Core(C::InvalidParam(_)) => 2,
            Self::Core(C::NonFiniteLoss { .. } | C::BoundViolated(_)) => 4,
            Self::Core(_) => 3,
            Self::Io { .. }
            | Self::MalformedHeader(_)
            | Self::IndexOutOfRange { .. }
            | Self::NonFiniteValue { .. }
            | Self::DuplicateFeature { .. }
            | Self::Parse { .. }
            | Self::RowCount { .. }
            | Self::Container(_) => 3,
        }
    }
}
