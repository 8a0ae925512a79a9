//! Acceptance and throughput accounting over decode traces.

use std::io::Write;
use std::time::Duration;

use serde::Serialize;

use crate::engine::{IterationTrace, PhaseTimes};
use crate::error::{Error, Result};

/// Abstract cost of each kind of model call.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostModel {
    pub c_target: f64,
    pub c_draft: f64,
    pub c_policy: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            c_target: 20.0,
            c_draft: 1.0,
            c_policy: 0.05,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_target", self.c_target),
            ("c_draft", self.c_draft),
            ("c_policy", self.c_policy),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        if self.c_target <= 0.0 {
            return Err(Error::InvalidArgument("c_target must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub method: String,
    pub draft_len: String,
    /// Generated tokens per target forward pass.
    pub tau: f64,
    /// Tokens per modeled cost unit, scaled by `c_target` so plain
    /// autoregressive decoding scores 1. Equal to the modeled speedup.
    pub tok_s_model: f64,
    pub tok_s_wall: f64,
    pub t_total_model: f64,
    pub t_draft_model: f64,
    pub t_target_model: f64,
    pub t_policy_model: f64,
    pub t_total_wall: f64,
    pub t_draft_wall: f64,
    pub t_target_wall: f64,
    pub t_policy_wall: f64,
    pub n_draft: usize,
    pub n_target: usize,
    pub n_waste: usize,
    pub n_policy: usize,
    pub n_accepted: usize,
    pub total_tokens: usize,
    pub speedup: f64,
    /// Number of decode sessions aggregated into this report.
    pub samples: usize,
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Report for one decode session.
pub fn compute_metrics(
    traces: &[IterationTrace],
    times: &PhaseTimes,
    cost: &CostModel,
    total_tokens: usize,
) -> Result<RunReport> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("no iterations to report".into()));
    }
    let n_target = traces.len();
    let n_draft: usize = traces.iter().map(|t| t.drafted).sum();
    let n_accepted: usize = traces.iter().map(|t| t.accepted).sum();
    let n_policy = traces.iter().filter(|t| t.policy_queried).count();
    let t_target_model = n_target as f64 * cost.c_target;
    let t_draft_model = n_draft as f64 * cost.c_draft;
    let t_policy_model = n_policy as f64 * cost.c_policy;
    let t_total_model = t_target_model + t_draft_model + t_policy_model;
    let speedup = total_tokens as f64 * cost.c_target / t_total_model;
    let total_wall = secs(times.total);
    Ok(RunReport {
        tau: total_tokens as f64 / n_target as f64,
        tok_s_model: speedup,
        tok_s_wall: if total_wall > 0.0 {
            total_tokens as f64 / total_wall
        } else {
            0.0
        },
        t_total_model,
        t_draft_model,
        t_target_model,
        t_policy_model,
        t_total_wall: total_wall,
        t_draft_wall: secs(times.draft),
        t_target_wall: secs(times.target),
        t_policy_wall: secs(times.policy),
        n_draft,
        n_target,
        n_waste: n_draft - n_accepted,
        n_policy,
        n_accepted,
        total_tokens,
        speedup,
        samples: 1,
        ..Default::default()
    })
}

/// Means of the rates, sums of the counts and times.
pub fn aggregate(reports: &[RunReport]) -> Result<RunReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument("no reports to aggregate".into()))?;
    let n = reports.len() as f64;
    let mean = |f: fn(&RunReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let sum_f = |f: fn(&RunReport) -> f64| reports.iter().map(f).sum::<f64>();
    let sum_u = |f: fn(&RunReport) -> usize| reports.iter().map(f).sum::<usize>();
    Ok(RunReport {
        method: first.method.clone(),
        draft_len: first.draft_len.clone(),
        tau: mean(|r| r.tau),
        tok_s_model: mean(|r| r.tok_s_model),
        tok_s_wall: mean(|r| r.tok_s_wall),
        speedup: mean(|r| r.speedup),
        t_total_model: sum_f(|r| r.t_total_model),
        t_draft_model: sum_f(|r| r.t_draft_model),
        t_target_model: sum_f(|r| r.t_target_model),
        t_policy_model: sum_f(|r| r.t_policy_model),
        t_total_wall: sum_f(|r| r.t_total_wall),
        t_draft_wall: sum_f(|r| r.t_draft_wall),
        t_target_wall: sum_f(|r| r.t_target_wall),
        t_policy_wall: sum_f(|r| r.t_policy_wall),
        n_draft: sum_u(|r| r.n_draft),
        n_target: sum_u(|r| r.n_target),
        n_waste: sum_u(|r| r.n_waste),
        n_policy: sum_u(|r| r.n_policy),
        n_accepted: sum_u(|r| r.n_accepted),
        total_tokens: sum_u(|r| r.total_tokens),
        samples: sum_u(|r| r.samples),
    })
}

pub const CSV_HEADER: &str =
    "method,draft_len,tau,tok_s,T_total,T_draft,T_target,N_draft,N_target,N_waste";

/// One CSV line with modeled times and throughput.
pub fn csv_row(r: &RunReport) -> String {
    format!(
        "{},{},{:.4},{:.4},{:.2},{:.2},{:.2},{},{},{}",
        r.method,
        r.draft_len,
        r.tau,
        r.tok_s_model,
        r.t_total_model,
        r.t_draft_model,
        r.t_target_model,
        r.n_draft,
        r.n_target,
        r.n_waste
    )
}

pub fn write_csv<W: Write>(mut w: W, reports: &[RunReport]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in reports {
        writeln!(w, "{}", csv_row(r))?;
    }
    Ok(())
}
