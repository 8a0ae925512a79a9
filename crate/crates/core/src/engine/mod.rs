//! Draft/verify decoding engine.

mod decode;
pub mod exact;
mod policy;
mod trace;
mod verify;

pub use decode::{decode, vanilla_ar, DecodeConfig, DecodeResult, PhaseTimes};
pub use policy::{combined_continue, ddd_continue, ddd_length, LengthPolicy};
pub use trace::{write_trace_jsonl, IterationTrace};
pub use verify::{accept_prob, verify_greedy, verify_stochastic};
