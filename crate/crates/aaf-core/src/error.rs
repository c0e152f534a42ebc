use thiserror::Error;

/// Errors raised by tensor ops, the gradient tape, and the pipeline.
#[derive(Debug, Error)]
pub enum AafError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: expected rank-{expected} tensor, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },

    #[error("{op}: channel count mismatch ({lhs} vs {rhs})")]
    ChannelMismatch {
        op: &'static str,
        lhs: usize,
        rhs: usize,
    },

    #[error("{op}: spatial extent must be non-empty")]
    EmptySpatial { op: &'static str },

    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { len: usize, shape: Vec<usize> },

    #[error("tensor shape {shape:?} contains a zero extent")]
    ZeroExtent { shape: Vec<usize> },

    #[error("backward expects a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("backward has already run on this tape")]
    BackwardAlreadyRun,

    #[error("parameter '{name}' has no gradient; run backward first")]
    MissingGrad { name: String },

    #[error("gradient buffer length {len} does not match tensor shape {shape:?}")]
    GradShape { len: usize, shape: Vec<usize> },

    #[error("identity affinity requires equal spatial extents, got {m} and {n}")]
    IdentityExtent { m: usize, n: usize },

    #[error(
        "fusion requires equal spatial extents, got query {m} and support {n}; \
         align the support to the query or declare support pooling"
    )]
    FusionExtent { m: usize, n: usize },

    #[error("fusion with no components cannot produce an output")]
    EmptyFusion,

    #[error("shots aggregation needs at least one support map per class")]
    NoSupportShots,

    #[error("unknown preset '{name}' (expected frw, dana_lite, mfrcn_lite or drl)")]
    UnknownPreset { name: String },

    #[error("parameter store: {0}")]
    ParamStore(String),

    #[error("{context}: {source}")]
    WithContext {
        context: String,
        #[source]
        source: Box<AafError>,
    },
}

impl AafError {
    /// Wraps the error with a class/shot or level annotation.
    pub fn in_context(self, context: impl Into<String>) -> AafError {
        AafError::WithContext {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Walks past context wrappers to the underlying error.
    pub fn root_cause(&self) -> &AafError {
        match self {
            AafError::WithContext { source, .. } => source.root_cause(),
            other => other,
        }
    }
}
