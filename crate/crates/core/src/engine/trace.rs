use std::io::Write;

use serde::Serialize;

use crate::error::Result;

/// Accounting for one draft/verify iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IterationTrace {
    pub iter: usize,
    /// Draft tokens submitted for verification.
    pub drafted: usize,
    /// Leading draft tokens the target accepted.
    pub accepted: usize,
    /// Whether the token produced by the target itself was kept.
    pub bonus_emitted: bool,
    /// Tokens appended to the output this iteration.
    pub emitted: usize,
    /// Length returned by the learned predictor, when one was queried.
    pub predicted_len: Option<usize>,
    /// Cumulative draft log-probability when drafting stopped.
    pub cum_logprob_exit: f64,
    /// Per-step draft log-probabilities, in order.
    #[serde(skip)]
    pub step_logprobs: Vec<f64>,
    /// Whether a length predictor was evaluated (charged in the cost model).
    #[serde(skip)]
    pub policy_queried: bool,
}

#[derive(Serialize)]
struct TraceRecord {
    iter: usize,
    drafted: usize,
    accepted: usize,
    bonus: bool,
    predicted_len: Option<usize>,
    cum_logprob_exit: f64,
}

impl IterationTrace {
    pub fn wasted(&self) -> usize {
        self.drafted - self.accepted
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&TraceRecord {
            iter: self.iter,
            drafted: self.drafted,
            accepted: self.accepted,
            bonus: self.bonus_emitted,
            predicted_len: self.predicted_len,
            cum_logprob_exit: self.cum_logprob_exit,
        })
        .expect("trace records always serialize")
    }
}

/// One JSON object per iteration, newline separated.
pub fn write_trace_jsonl<W: Write>(mut w: W, traces: &[IterationTrace]) -> Result<()> {
    for t in traces {
        writeln!(w, "{}", t.to_json_line())?;
    }
    Ok(())
}
