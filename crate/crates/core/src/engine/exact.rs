//! Exact emission distribution of one stochastic draft/verify iteration.
//!
//! Models are given as closures from a context (the tokens emitted since the
//! start of the iteration) to a next-token distribution. Every draft choice
//! and every accept/reject outcome is enumerated, and paths that end early
//! are completed autoregressively by the target, so every path has the same
//! length and the result can be compared with the target's own chained
//! distribution over that many tokens.

use std::collections::BTreeMap;

use crate::dist::Dist;
use crate::error::Result;
use crate::lm::TargetOutput;
use crate::rng::Rng;
use crate::vocab::{TokenId, TokenSeq};

use super::verify::{accept_prob, stochastic_accept};

pub type PathDist = BTreeMap<TokenSeq, f64>;

fn add(out: &mut PathDist, path: TokenSeq, p: f64) {
    *out.entry(path).or_insert(0.0) += p;
}

/// Probability of every token sequence of length `horizon` under the target
/// alone.
pub fn chained_distribution<T>(target: &T, horizon: usize) -> PathDist
where
    T: Fn(&[TokenId]) -> Dist,
{
    let mut out = PathDist::new();
    complete(target, Vec::new(), 1.0, horizon, &mut out);
    out
}

fn complete<T>(target: &T, ctx: TokenSeq, p: f64, horizon: usize, out: &mut PathDist)
where
    T: Fn(&[TokenId]) -> Dist,
{
    if ctx.len() == horizon {
        add(out, ctx, p);
        return;
    }
    let d = target(&ctx);
    for (t, &pt) in d.probs().iter().enumerate() {
        if pt > 0.0 {
            let mut next = ctx.clone();
            next.push(t as TokenId);
            complete(target, next, p * pt, horizon, out);
        }
    }
}

/// Emission distribution over the first `k + 1` tokens when one iteration
/// drafts `k` tokens and the target fills in the rest.
pub fn emission_distribution<T, D>(target: &T, draft: &D, k: usize) -> Result<PathDist>
where
    T: Fn(&[TokenId]) -> Dist,
    D: Fn(&[TokenId]) -> Dist,
{
    let mut out = PathDist::new();
    branch(target, draft, Vec::new(), 1.0, k, &mut out)?;
    Ok(out)
}

fn branch<T, D>(
    target: &T,
    draft: &D,
    ctx: TokenSeq,
    p: f64,
    k: usize,
    out: &mut PathDist,
) -> Result<()>
where
    T: Fn(&[TokenId]) -> Dist,
    D: Fn(&[TokenId]) -> Dist,
{
    let horizon = k + 1;
    let tp = target(&ctx);
    if ctx.len() == k {
        // Every draft token accepted: the bonus comes from the target.
        for (t, &pt) in tp.probs().iter().enumerate() {
            if pt > 0.0 {
                let mut next = ctx.clone();
                next.push(t as TokenId);
                add(out, next, p * pt);
            }
        }
        return Ok(());
    }
    let dq = draft(&ctx);
    let mut reject_mass = 0.0;
    for (t, &qt) in dq.probs().iter().enumerate() {
        if qt <= 0.0 {
            continue;
        }
        let a = accept_prob(tp.prob(t as TokenId), qt)?;
        reject_mass += qt * (1.0 - a);
        if a > 0.0 {
            let mut next = ctx.clone();
            next.push(t as TokenId);
            branch(target, draft, next, p * qt * a, k, out)?;
        }
    }
    if reject_mass > 0.0 {
        let res = Dist::residual(&tp, &dq)?;
        for (r, &pr) in res.probs().iter().enumerate() {
            if pr > 0.0 {
                let mut next = ctx.clone();
                next.push(r as TokenId);
                complete(target, next, p * reject_mass * pr, horizon, out);
            }
        }
    }
    Ok(())
}

/// Draws one iteration through the engine's own rejection sampler and
/// completes it to `k + 1` tokens with the target.
pub fn sample_path<T, D>(target: &T, draft: &D, k: usize, rng: &mut Rng) -> Result<TokenSeq>
where
    T: Fn(&[TokenId]) -> Dist,
    D: Fn(&[TokenId]) -> Dist,
{
    let mut tokens = Vec::with_capacity(k);
    let mut dists = Vec::with_capacity(k);
    for _ in 0..k {
        let q = draft(&tokens);
        tokens.push(q.sample(rng));
        dists.push(q);
    }
    let outputs: Vec<TargetOutput<f64>> = (0..=k)
        .map(|i| TargetOutput {
            dist: target(&tokens[..i]),
            feature: Vec::new(),
        })
        .collect();
    let (accepted, next) = stochastic_accept(&outputs, &tokens, &dists, rng)?;
    let mut path = tokens[..accepted].to_vec();
    path.push(next);
    while path.len() < k + 1 {
        let t = target(&path).sample(rng);
        path.push(t);
    }
    Ok(path)
}

/// Largest absolute difference between two path distributions.
pub fn max_abs_diff(a: &PathDist, b: &PathDist) -> f64 {
    let mut worst: f64 = 0.0;
    for (path, &pa) in a {
        worst = worst.max((pa - b.get(path).copied().unwrap_or(0.0)).abs());
    }
    for (path, &pb) in b {
        if !a.contains_key(path) {
            worst = worst.max(pb.abs());
        }
    }
    worst
}
