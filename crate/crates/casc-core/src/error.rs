//! Error type shared across the crate.

use thiserror::Error;

/// Errors emitted by tensor kernels, model handling, simulation and exports.
#[derive(Debug, Error)]
pub enum CascError {
    /// Tensor shapes do not compose for the requested operation.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    /// Convolution / pooling geometry is impossible (kernel larger than the
    /// padded input, zero stride, non-dividing pool windows, ...).
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A model violates a structural invariant (Q < 1, truncated weights,
    /// activation flags out of place, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Spike counts handed to the decoder fall outside [0, Q]; this signals a
    /// broken invariant upstream, not a user error.
    #[error("spike count {count} outside [0, {q}] at index {index}")]
    CountOutOfRange { count: i64, q: u32, index: usize },

    /// A diagnostics query referenced a neuron the trace does not watch.
    #[error("neuron (layer {layer}, index {index}) not recorded in trace")]
    UnknownNeuron { layer: usize, index: usize },

    /// Training produced a non-finite loss.
    #[error("training aborted: {0}")]
    TrainDiverged(String),

    /// Model file could not be parsed.
    #[error("malformed model file {path}: {reason}")]
    MalformedModel { path: String, reason: String },

    /// Underlying I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CascError {
    pub(crate) fn shape(context: &str, expected: impl Into<String>, got: impl Into<String>) -> Self {
        CascError::ShapeMismatch {
            context: context.to_string(),
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CascError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
