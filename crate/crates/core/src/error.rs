//! Error type shared across the crate.

/// Everything that can go wrong while loading models or estimating memory.
///
/// The enum is `Clone` so sweep results can carry per-cell failures without
/// aborting the rest of the grid.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// A field failed validation. `field` names the offending input.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    /// A manifest file could not be read.
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },

    /// A manifest file could not be parsed.
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },

    /// The batch-size scan hit its cap while the peak still fit, so the
    /// returned maximum would be censored rather than real.
    #[error("batch scan reached cap {cap} while still feasible; raise the cap to search further")]
    BatchCapExceeded { cap: u64 },

    /// The hybrid formula subtracted more replicated-parameter memory than the
    /// data-parallel peak contains; the inputs are inconsistent.
    #[error("hybrid estimate underflow: removing {subtrahend} B of replicated parameters drops the peak below the {base} B baseline")]
    HybridUnderflow { subtrahend: u64, base: u64 },

    /// No chunk-size candidate is large enough to hold the biggest chunked
    /// operator.
    #[error("no chunk-size candidate can hold the largest chunked operator ({required} params)")]
    NoFeasibleChunkSize { required: u64 },
}

impl Error {
    /// Shorthand for a validation failure on a named field.
    pub fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
