use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("corpus too short: {0}")]
    CorpusTooShort(String),
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(char),
    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("degenerate distribution")]
    DegenerateDistribution,
    #[error("degenerate residual")]
    DegenerateResidual,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("non-finite loss in epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("lossless check failed for {method}: {detail}")]
    NotLossless { method: String, detail: String },
    #[error("missing artifact {path} (run `{stage}` first)")]
    MissingArtifact {
        stage: String,
        path: std::path::PathBuf,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
