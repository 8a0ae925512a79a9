//! Experiment harness: configuration, corpus handling, the staged pipeline
//! and result reports.

pub mod config;
pub mod corpus;
pub mod pipeline;
pub mod report;

pub use config::Config;
pub use corpus::{parse_documents, periodic_corpus, split_corpus, synthetic_prose, Split};
pub use pipeline::{
    check_lossless, evaluate_ldlp, prepare, run_all, run_method, BenchOutcome, LdlpEval,
    LdlpVariant, MethodRun, PipelineOutcome, Prepared, Workspace,
};
