//! Draft/verify speculative decoding with adaptive draft-length policies.
//!
//! A small fixed-window target language model exposes a feature vector per
//! position; a feature-level draft head proposes tokens that the target
//! verifies in one pass. How many tokens to draft each iteration is decided by
//! a [`LengthPolicy`]: a fixed length, a look-ahead oracle, a learned length
//! predictor ([`ldlp`]), a cumulative-probability threshold, or the
//! combination of the last two. [`metrics`] turns decode traces into
//! acceptance and throughput reports and [`bench`] wires everything into a
//! reproducible pipeline.
//!
//! Models are generic over the [`Scalar`] weight type; the aliases below name
//! the `f32` and `f64` instantiations.

pub mod bench;
pub mod dist;
pub mod engine;
pub mod error;
pub mod ldlp;
pub mod lm;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod vocab;

pub use dist::{normalize, residual_dist, Dist, Sampling};
pub use engine::{
    decode, vanilla_ar, verify_greedy, verify_stochastic, DecodeConfig, DecodeResult,
    IterationTrace, LengthPolicy,
};
pub use error::{Error, Result};
pub use lm::{LmDims, Persist, TargetOutput};
pub use rng::Rng;
pub use scalar::Scalar;
pub use vocab::{build_char_vocab, TokenId, TokenSeq, Vocab};

pub type TargetLm<S = f64> = lm::TargetLm<S>;
pub type DraftHead<S = f64> = lm::DraftHead<S>;
pub type LdlpModel<S = f64> = ldlp::LdlpModel<S>;
pub type LdlpSample<S = f64> = ldlp::LdlpSample<S>;

pub type TargetLm32 = lm::TargetLm<f32>;
pub type TargetLm64 = lm::TargetLm<f64>;
pub type DraftHead32 = lm::DraftHead<f32>;
pub type DraftHead64 = lm::DraftHead<f64>;
pub type LdlpModel32 = ldlp::LdlpModel<f32>;
pub type LdlpModel64 = ldlp::LdlpModel<f64>;
