use thiserror::Error;

/// Errors produced anywhere in the separation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("signal too short: {len} samples is less than one window of {win}")]
    SignalTooShort { len: usize, win: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("wav: {0}")]
    Wav(String),

    #[error("unsupported wav codec: {0}")]
    UnsupportedCodec(String),

    #[error("singular demixing system at frequency bin {freq} (source {source_index})")]
    Singular { freq: usize, source_index: usize },

    #[error("non-finite {what} at iteration {iteration}, source {source_index}")]
    NonFinite { what: &'static str, iteration: usize, source_index: usize },

    #[error("model layer `{layer}`: {msg}")]
    Layer { layer: String, msg: String },

    #[error("weight container: {0}")]
    Container(String),

    #[error("weight container checksum: {0}")]
    Checksum(String),

    #[error("permutation search over {0} sources is out of range (max 8); use an assignment solver")]
    TooManySources(usize),

    #[error("reference signal is all zeros")]
    ZeroReference,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
