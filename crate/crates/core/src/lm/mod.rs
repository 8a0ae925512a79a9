//! The toy target language model and its feature-level draft head.

pub(crate) mod container;
mod draft;
mod target;
mod train;

pub use container::{ModelKind, Persist};
pub use draft::{train_draft, Draft, DraftHead, DraftTrainConfig};
pub use target::{train_lm, LmDims, TargetLm, TargetOutput};
pub use train::{cosine_lr, Schedule, TrainConfig, TrainReport};

pub(crate) use train::run_sgd;
