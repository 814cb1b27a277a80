use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("prefix of {fraction} x {subseq_len} samples is not an integer number of samples")]
    NonIntegralPrefix { fraction: String, subseq_len: usize },

    #[error("signal of length {signal} must be longer than template of length {template}")]
    LengthMismatch { signal: usize, template: usize },

    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    SampleRateMismatch(f64, f64),

    #[error("zero-energy {0}")]
    ZeroEnergy(&'static str),

    #[error("empty frequency grid")]
    EmptyGrid,

    #[error("unreliable estimate: partial correlation {index} has magnitude {magnitude:e} below numerical floor")]
    UnreliableEstimate { index: usize, magnitude: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("receiver coincides with satellite")]
    CoincidentReceiver,

    #[error("{path}: payload holds {actual} samples, header declares {declared}")]
    PayloadLength {
        path: PathBuf,
        declared: u64,
        actual: u64,
    },

    #[error("unknown sample format {0:?}")]
    UnknownFormat(String),

    #[error("{path}: {source}")]
    Sidecar {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
