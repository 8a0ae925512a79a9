//! The adaptive-length draft/verify loop and the plain autoregressive baseline.
//!
//! State between iterations: the committed sequence, whose last token is the
//! target's bonus token from the previous verification, and the target feature
//! at the position before it (the last validated position). The prompt is
//! treated the same way: its last token plays the bonus role and the feature
//! of the token before it is computed once up front.

use std::time::{Duration, Instant};

use crate::dist::Sampling;
use crate::error::{Error, Result};
use crate::ldlp::lcp_len;
use crate::lm::{DraftHead, TargetLm};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::vocab::{TokenId, TokenSeq};

use super::policy::{LengthPolicy, StopRule};
use super::trace::IterationTrace;
use super::verify::{greedy_accept, stochastic_accept};

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeConfig {
    pub max_tokens: usize,
    pub mode: Sampling,
    /// Generation stops after this token is emitted.
    pub terminator: Option<TokenId>,
}

impl DecodeConfig {
    pub fn greedy(max_tokens: usize, terminator: Option<TokenId>) -> Self {
        Self {
            max_tokens,
            mode: Sampling::Greedy,
            terminator,
        }
    }
}

/// Wall-clock time per phase of a decode session.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub draft: Duration,
    pub target: Duration,
    pub policy: Duration,
    pub total: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    /// Generated tokens, prompt removed.
    pub output: TokenSeq,
    pub traces: Vec<IterationTrace>,
    pub times: PhaseTimes,
}

impl DecodeResult {
    /// Number of target forward passes.
    pub fn target_calls(&self) -> usize {
        self.traces.len()
    }
}

fn validate_inputs<S: Scalar>(
    lm: &TargetLm<S>,
    prompt: &[TokenId],
    cfg: &DecodeConfig,
) -> Result<()> {
    if prompt.is_empty() {
        return Err(Error::InvalidArgument("empty prompt".into()));
    }
    if cfg.max_tokens == 0 {
        return Err(Error::InvalidArgument(
            "max_tokens must be at least 1".into(),
        ));
    }
    lm.check_tokens(prompt)?;
    if let Some(t) = cfg.terminator {
        lm.check_tokens(&[t])?;
    }
    Ok(())
}

/// Appends `tokens` until the budget or the terminator is hit. Returns the
/// number appended and whether generation is finished.
fn commit(
    seq: &mut TokenSeq,
    produced: &mut usize,
    tokens: impl IntoIterator<Item = TokenId>,
    cfg: &DecodeConfig,
) -> (usize, bool) {
    let mut n = 0;
    for t in tokens {
        seq.push(t);
        *produced += 1;
        n += 1;
        if Some(t) == cfg.terminator || *produced >= cfg.max_tokens {
            return (n, true);
        }
    }
    (n, false)
}

/// Speculative decoding of up to `cfg.max_tokens` tokens after `prompt`.
///
/// Every iteration drafts according to `policy`, verifies the draft in one
/// target pass and commits the accepted prefix plus the target's own next
/// token. In greedy mode the output equals the target's greedy continuation.
pub fn decode<S: Scalar>(
    lm: &TargetLm<S>,
    dh: &DraftHead<S>,
    policy: &LengthPolicy<'_, S>,
    prompt: &[TokenId],
    cfg: &DecodeConfig,
    rng: &mut Rng,
) -> Result<DecodeResult> {
    let started = Instant::now();
    validate_inputs(lm, prompt, cfg)?;
    dh.check_compatible(lm)?;
    policy.validate(&lm.dims())?;
    if policy.is_oracle() && cfg.mode != Sampling::Greedy {
        return Err(Error::InvalidArgument(
            "the oracle policy is defined for greedy decoding only".into(),
        ));
    }
    let mut times = PhaseTimes::default();

    let formal = if let LengthPolicy::Oracle { k_max } = policy {
        let t = Instant::now();
        let f = lm.greedy_continuation(prompt, cfg.max_tokens + k_max + 1, cfg.terminator)?;
        times.policy += t.elapsed();
        Some(f)
    } else {
        None
    };

    let pad = lm.dims().pad_id();
    let mut seq: TokenSeq = prompt.to_vec();
    let mut produced = 0usize;
    let t = Instant::now();
    let mut anchor_pos = prompt.len() as isize - 2;
    let mut anchor_feature = lm.feature_at(&seq, anchor_pos);
    times.target += t.elapsed();
    let mut traces = Vec::new();

    loop {
        let seed = *seq.last().expect("sequence is never empty");
        let anchor_token = if anchor_pos >= 0 {
            seq[anchor_pos as usize]
        } else {
            pad
        };
        let mut trace = IterationTrace {
            iter: traces.len(),
            ..Default::default()
        };

        // Decide the stop rule for this draft.
        let t = Instant::now();
        let mut lookahead = None;
        let rule = match policy {
            LengthPolicy::Fixed(k) => StopRule::Length(*k),
            LengthPolicy::Oracle { k_max } => {
                let d =
                    dh.draft_autoregress(lm, seed, &anchor_feature, *k_max, Sampling::Greedy, rng)?;
                let formal = formal.as_ref().expect("oracle continuation computed above");
                let k = lcp_len(&d.tokens, &formal[produced.min(formal.len())..]);
                lookahead = Some(d);
                StopRule::Length(k)
            }
            LengthPolicy::Ldlp { model, k_max } => {
                let k =
                    model.predict_length(lm.embedding_of(anchor_token), &anchor_feature, *k_max)?;
                trace.predicted_len = Some(k);
                trace.policy_queried = true;
                StopRule::Length(k)
            }
            LengthPolicy::Ddd { theta, k_max } => StopRule::Ddd {
                theta: *theta,
                k_max: *k_max,
            },
            LengthPolicy::Combined {
                model,
                theta,
                k_max,
            } => {
                let k_pred =
                    model.predict_length(lm.embedding_of(anchor_token), &anchor_feature, *k_max)?;
                trace.predicted_len = Some(k_pred);
                trace.policy_queried = true;
                StopRule::Combined {
                    k_pred,
                    theta: *theta,
                    k_max: *k_max,
                }
            }
        };
        times.policy += t.elapsed();

        // Draft.
        let t = Instant::now();
        let mut draft_tokens: TokenSeq = Vec::new();
        let mut draft_dists = Vec::new();
        let mut cum = 0.0;
        if let Some(d) = lookahead {
            let StopRule::Length(k) = rule else {
                unreachable!()
            };
            draft_tokens.extend_from_slice(&d.tokens[..k]);
            draft_dists.extend(d.dists.into_iter().take(k));
            for (&tok, dist) in draft_tokens.iter().zip(&draft_dists) {
                let lp = dist.prob(tok).ln();
                trace.step_logprobs.push(lp);
                cum += lp;
            }
        } else {
            let mut token = seed;
            let mut feature = anchor_feature.clone();
            while rule.keep_going(draft_tokens.len(), cum) {
                let (f_hat, dist) = dh.step(lm, token, &feature);
                token = cfg.mode.pick(&dist, rng);
                let lp = dist.prob(token).ln();
                trace.step_logprobs.push(lp);
                cum += lp;
                draft_tokens.push(token);
                draft_dists.push(dist);
                feature = f_hat;
            }
        }
        trace.drafted = draft_tokens.len();
        trace.cum_logprob_exit = cum;
        times.draft += t.elapsed();

        // Verify in one target pass over the new positions.
        let t = Instant::now();
        let base = seq.len() - 1;
        seq.extend_from_slice(&draft_tokens);
        let outputs = lm.forward_range(&seq, base)?;
        seq.truncate(base + 1);
        let (accepted, next) = match cfg.mode {
            Sampling::Greedy => greedy_accept(&outputs, &draft_tokens),
            Sampling::Stochastic => stochastic_accept(&outputs, &draft_tokens, &draft_dists, rng)?,
        };
        times.target += t.elapsed();

        trace.accepted = accepted;
        let kept = draft_tokens[..accepted]
            .iter()
            .copied()
            .chain(std::iter::once(next));
        let (emitted, done) = commit(&mut seq, &mut produced, kept, cfg);
        trace.emitted = emitted;
        trace.bonus_emitted = emitted == accepted + 1;
        traces.push(trace);
        if done {
            break;
        }
        anchor_pos = (base + accepted) as isize;
        anchor_feature = outputs
            .into_iter()
            .nth(accepted)
            .expect("one output per verified position")
            .feature;
    }

    times.total = started.elapsed();
    Ok(DecodeResult {
        output: seq.split_off(prompt.len()),
        traces,
        times,
    })
}

/// One target forward per generated token.
pub fn vanilla_ar<S: Scalar>(
    lm: &TargetLm<S>,
    prompt: &[TokenId],
    cfg: &DecodeConfig,
    rng: &mut Rng,
) -> Result<DecodeResult> {
    let started = Instant::now();
    validate_inputs(lm, prompt, cfg)?;
    let mut seq = prompt.to_vec();
    let mut produced = 0;
    let mut traces = Vec::new();
    loop {
        let f = lm.feature_at(&seq, seq.len() as isize - 1);
        let t = cfg.mode.pick(&lm.head_dist(&f), rng);
        let (emitted, done) = commit(&mut seq, &mut produced, [t], cfg);
        traces.push(IterationTrace {
            iter: traces.len(),
            bonus_emitted: true,
            emitted,
            ..Default::default()
        });
        if done {
            break;
        }
    }
    let total = started.elapsed();
    Ok(DecodeResult {
        output: seq.split_off(prompt.len()),
        traces,
        times: PhaseTimes {
            target: total,
            total,
            ..Default::default()
        },
    })
}
