//! Verification of a draft against the target in a single pass.

use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::lm::{TargetLm, TargetOutput};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::vocab::TokenId;

/// Probability of keeping a draft token: `min(1, p / p̂)`.
pub fn accept_prob(p: f64, p_hat: f64) -> Result<f64> {
    if p_hat.is_nan() || p_hat <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "draft probability must be positive, got {p_hat}"
        )));
    }
    if p < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "target probability must be non-negative, got {p}"
        )));
    }
    Ok((p / p_hat).min(1.0))
}

/// `outputs[i]` is the target output at the position preceding `draft[i]`;
/// there is one more output than draft tokens.
pub(crate) fn greedy_accept<S>(outputs: &[TargetOutput<S>], draft: &[TokenId]) -> (usize, TokenId) {
    debug_assert_eq!(outputs.len(), draft.len() + 1);
    let accepted = draft
        .iter()
        .zip(outputs)
        .take_while(|(&t, out)| out.dist.argmax() == t)
        .count();
    (accepted, outputs[accepted].dist.argmax())
}

pub(crate) fn stochastic_accept<S>(
    outputs: &[TargetOutput<S>],
    draft: &[TokenId],
    draft_dists: &[Dist],
    rng: &mut Rng,
) -> Result<(usize, TokenId)> {
    debug_assert_eq!(outputs.len(), draft.len() + 1);
    if draft_dists.len() != draft.len() {
        return Err(Error::DimMismatch(format!(
            "{} draft tokens but {} draft distributions",
            draft.len(),
            draft_dists.len()
        )));
    }
    for (i, (&t, q)) in draft.iter().zip(draft_dists).enumerate() {
        let p = &outputs[i].dist;
        let a = accept_prob(p.prob(t), q.prob(t))?;
        if rng.next_f64() >= a {
            let next = Dist::residual(p, q)?.sample(rng);
            return Ok((i, next));
        }
    }
    Ok((draft.len(), outputs[draft.len()].dist.sample(rng)))
}

fn verification_pass<S: Scalar>(
    lm: &TargetLm<S>,
    prefix: &[TokenId],
    draft: &[TokenId],
) -> Result<Vec<TargetOutput<S>>> {
    if prefix.is_empty() {
        return Err(Error::InvalidArgument("empty prefix".into()));
    }
    let mut seq = Vec::with_capacity(prefix.len() + draft.len());
    seq.extend_from_slice(prefix);
    seq.extend_from_slice(draft);
    lm.forward_range(&seq, prefix.len() - 1)
}

/// Greedy verification: the number of leading draft tokens that match the
/// target argmax, and the target argmax at the first unmatched position.
pub fn verify_greedy<S: Scalar>(
    lm: &TargetLm<S>,
    prefix: &[TokenId],
    draft: &[TokenId],
) -> Result<(usize, TokenId)> {
    let outputs = verification_pass(lm, prefix, draft)?;
    Ok(greedy_accept(&outputs, draft))
}

/// Rejection-sampling verification. On the first rejection the next token is
/// drawn from the residual distribution; if every token is accepted it is
/// drawn from the target at the bonus position.
pub fn verify_stochastic<S: Scalar>(
    lm: &TargetLm<S>,
    prefix: &[TokenId],
    draft: &[TokenId],
    draft_dists: &[Dist],
    rng: &mut Rng,
) -> Result<(usize, TokenId)> {
    let outputs = verification_pass(lm, prefix, draft)?;
    stochastic_accept(&outputs, draft, draft_dists, rng)
}
