//! Learned draft-length predictor: model, training data collection and
//! training.

mod dataset;
mod model;
mod train;

pub use dataset::{collect_dataset, lcp_len, load_dataset, save_dataset, LdlpSample};
pub(crate) use model::clamp_length;
pub use model::{penalized_l1, round_half_away, HeadKind, LdlpModel};
pub use train::{train_ldlp, LdlpTrainConfig};
