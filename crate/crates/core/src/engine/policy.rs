//! Draft-length policies and their stop rules.

use std::fmt;

use crate::error::{Error, Result};
use crate::ldlp::LdlpModel;
use crate::lm::LmDims;
use crate::scalar::Scalar;

/// How many tokens to draft in each iteration.
#[derive(Clone, Debug)]
pub enum LengthPolicy<'m, S = f64> {
    /// Always draft `k` tokens.
    Fixed(usize),
    /// Draft exactly the number of tokens the target will accept, found by
    /// look-ahead against the target's greedy continuation. Greedy mode only.
    Oracle { k_max: usize },
    /// Length predicted by the learned predictor from the last validated
    /// token's embedding and target feature.
    Ldlp {
        model: &'m LdlpModel<S>,
        k_max: usize,
    },
    /// Keep drafting while the cumulative draft log-probability exceeds `theta`.
    Ddd { theta: f64, k_max: usize },
    /// Stop only once the step reaches the predicted length and the cumulative
    /// log-probability has fallen below `theta`.
    Combined {
        model: &'m LdlpModel<S>,
        theta: f64,
        k_max: usize,
    },
}

impl<S: Scalar> LengthPolicy<'_, S> {
    pub fn validate(&self, dims: &LmDims) -> Result<()> {
        let check_k = |k: usize, what: &str| {
            if k == 0 {
                Err(Error::InvalidArgument(format!("{what} must be at least 1")))
            } else {
                Ok(())
            }
        };
        let check_theta = |theta: f64| {
            if theta > 0.0 || theta.is_nan() {
                Err(Error::InvalidArgument(format!(
                    "log-probability threshold must be <= 0, got {theta}"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            Self::Fixed(k) => check_k(*k, "fixed draft length"),
            Self::Oracle { k_max } => check_k(*k_max, "k_max"),
            Self::Ldlp { model, k_max } => {
                check_k(*k_max, "k_max")?;
                model.check_dims(dims)
            }
            Self::Ddd { theta, k_max } => {
                check_k(*k_max, "k_max")?;
                check_theta(*theta)
            }
            Self::Combined {
                model,
                theta,
                k_max,
            } => {
                check_k(*k_max, "k_max")?;
                check_theta(*theta)?;
                model.check_dims(dims)
            }
        }
    }

    pub fn k_max(&self) -> usize {
        match self {
            Self::Fixed(k) => *k,
            Self::Oracle { k_max }
            | Self::Ldlp { k_max, .. }
            | Self::Ddd { k_max, .. }
            | Self::Combined { k_max, .. } => *k_max,
        }
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self, Self::Oracle { .. })
    }

    /// Short method label used in reports.
    pub fn label(&self) -> String {
        match self {
            Self::Fixed(k) => format!("fixed-{k}"),
            Self::Oracle { .. } => "oracle".into(),
            Self::Ldlp { .. } => "ldlp".into(),
            Self::Ddd { .. } => "ddd".into(),
            Self::Combined { .. } => "ldlp-ddd".into(),
        }
    }
}

impl<S> fmt::Display for LengthPolicy<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(k) => write!(f, "Fixed({k})"),
            Self::Oracle { k_max } => write!(f, "Oracle(k_max={k_max})"),
            Self::Ldlp { k_max, .. } => write!(f, "Ldlp(k_max={k_max})"),
            Self::Ddd { theta, k_max } => write!(f, "Ddd(theta={theta}, k_max={k_max})"),
            Self::Combined { theta, k_max, .. } => {
                write!(f, "Combined(theta={theta}, k_max={k_max})")
            }
        }
    }
}

/// Threshold rule: continue iff `cum_logprob > theta` and `step < k_max`.
pub fn ddd_continue(cum_logprob: f64, theta: f64, step: usize, k_max: usize) -> bool {
    cum_logprob > theta && step < k_max
}

/// Combined rule: stop once `step >= k_pred` and `cum_logprob < theta`, and
/// never beyond `k_max`.
pub fn combined_continue(
    step: usize,
    k_pred: usize,
    cum_logprob: f64,
    theta: f64,
    k_max: usize,
) -> bool {
    step < k_max && !(step >= k_pred && cum_logprob < theta)
}

/// Length the threshold rule reaches on a trajectory with per-step draft
/// log-probabilities `step_logprobs`. A trajectory shorter than the rule
/// would go ends the count at its own length.
pub fn ddd_length(step_logprobs: &[f64], theta: f64, k_max: usize) -> usize {
    let mut cum = 0.0;
    let mut step = 0;
    while step < step_logprobs.len() && ddd_continue(cum, theta, step, k_max) {
        cum += step_logprobs[step];
        step += 1;
    }
    step
}

/// Per-iteration stop rule derived from a policy.
#[derive(Clone, Copy, Debug)]
pub(crate) enum StopRule {
    Length(usize),
    Ddd {
        theta: f64,
        k_max: usize,
    },
    Combined {
        k_pred: usize,
        theta: f64,
        k_max: usize,
    },
}

impl StopRule {
    pub fn keep_going(&self, step: usize, cum_logprob: f64) -> bool {
        match *self {
            StopRule::Length(k) => step < k,
            StopRule::Ddd { theta, k_max } => ddd_continue(cum_logprob, theta, step, k_max),
            StopRule::Combined {
                k_pred,
                theta,
                k_max,
            } => combined_continue(step, k_pred, cum_logprob, theta, k_max),
        }
    }
}
