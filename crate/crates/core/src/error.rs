use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("empty waveform")]
    EmptyWaveform,
    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("empty source stack")]
    EmptyStack,
    #[error("source {index} has length {found}, expected {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("source {index} has sample rate {found}, expected {expected}")]
    RateMismatch {
        index: usize,
        expected: u32,
        found: u32,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("wav file has {0} channels, only mono is supported")]
    UnsupportedChannels(u16),
    #[error("unsupported wav encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("wav error for {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("io error for {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("non-finite loss for example {index}")]
    NonFiniteLoss { index: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(PathBuf),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("{stage} training diverged at step {step}: {source}")]
    Diverged {
        stage: String,
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
