//! Optimal draft length, the zero-waste oracle decoder and an empirical probe
//! of how draft agreement decays with the distance from true history.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::Sampling;
use crate::engine::{decode, DecodeConfig, DecodeResult, LengthPolicy};
use crate::error::{Error, Result};
use crate::ldlp::lcp_len;
use crate::lm::{DraftHead, TargetLm};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::vocab::TokenId;

pub const DEFAULT_ORACLE_K_MAX: usize = 10;

/// Number of draft tokens the target would accept from the state where
/// `prefix` is committed and its last token has not been drafted from yet.
///
/// Drafts `k_max` tokens from the last token of `prefix` and the target
/// feature at the position before it, and returns the length of agreement
/// with the target's greedy continuation.
pub fn opt_k<S: Scalar>(
    lm: &TargetLm<S>,
    dh: &DraftHead<S>,
    prefix: &[TokenId],
    k_max: usize,
) -> Result<usize> {
    let formal = lm.greedy_continuation(prefix, k_max, None)?;
    let feature = lm.feature_at(prefix, prefix.len() as isize - 2);
    let seed = *prefix
        .last()
        .expect("greedy_continuation rejects empty prefixes");
    let draft = dh.draft_autoregress(
        lm,
        seed,
        &feature,
        k_max,
        Sampling::Greedy,
        &mut Rng::new(0),
    )?;
    Ok(lcp_len(&draft.tokens, &formal))
}

/// Greedy decoding where every iteration drafts exactly the accepted length.
pub fn oracle_decode<S: Scalar>(
    lm: &TargetLm<S>,
    dh: &DraftHead<S>,
    prompt: &[TokenId],
    max_tokens: usize,
    terminator: Option<TokenId>,
    k_max: usize,
) -> Result<DecodeResult> {
    decode(
        lm,
        dh,
        &LengthPolicy::Oracle { k_max },
        prompt,
        &DecodeConfig::greedy(max_tokens, terminator),
        &mut Rng::new(0),
    )
}

/// Agreement counts for one history gap `m − j`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ProbeRow {
    pub m_minus_j: usize,
    pub n: usize,
    pub agree_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    /// One row per gap of the nearer cut `j`; counts sum to the number of
    /// sampled positions.
    pub rows: Vec<ProbeRow>,
    /// Same counts for the farther cut `j'`.
    pub far_rows: Vec<ProbeRow>,
    /// Fraction of sampled `(m, j, j')` where agreement from `j` is at least
    /// agreement from `j'`.
    pub dominance_fraction: f64,
    pub n_positions: usize,
}

impl ProbeReport {
    /// Agreement rate per gap over both cuts, ordered by gap.
    pub fn agreement_by_gap(&self) -> Vec<(usize, f64)> {
        let mut merged = self.rows.clone();
        for (m, f) in merged.iter_mut().zip(&self.far_rows) {
            m.n += f.n;
            m.agree_count += f.agree_count;
        }
        merged
            .iter()
            .filter(|r| r.n > 0)
            .map(|r| (r.m_minus_j, r.agree_count as f64 / r.n as f64))
            .collect()
    }
}

/// Whether the draft token for position `m`, drafted autoregressively from
/// true history up to `j = m − gap`, equals the target's greedy token at `m`.
fn agrees<S: Scalar>(
    lm: &TargetLm<S>,
    dh: &DraftHead<S>,
    tokens: &[TokenId],
    m: usize,
    gap: usize,
) -> Result<bool> {
    let j = m - gap;
    let feature = lm.feature_at(tokens, j as isize - 1);
    let draft = dh.draft_autoregress(
        lm,
        tokens[j],
        &feature,
        gap,
        Sampling::Greedy,
        &mut Rng::new(0),
    )?;
    let formal = lm
        .head_dist(&lm.feature_at(tokens, m as isize - 1))
        .argmax();
    Ok(draft.tokens[gap - 1] == formal)
}

/// Samples `n_positions` positions `m` of `tokens` with two cuts
/// `m − max_gap ≤ j' < j < m` and counts how often the draft reproduces the
/// target's greedy token at `m` from each cut.
pub fn assumption1_probe<S: Scalar>(
    lm: &TargetLm<S>,
    dh: &DraftHead<S>,
    tokens: &[TokenId],
    n_positions: usize,
    max_gap: usize,
    rng: &mut Rng,
) -> Result<ProbeReport> {
    dh.check_compatible(lm)?;
    lm.check_tokens(tokens)?;
    if max_gap < 2 {
        return Err(Error::InvalidArgument("max_gap must be at least 2".into()));
    }
    if tokens.len() < max_gap + 2 {
        return Err(Error::CorpusTooShort(format!(
            "{} tokens for a probe with gap up to {max_gap}",
            tokens.len()
        )));
    }
    let triples: Vec<(usize, usize, usize)> = (0..n_positions)
        .map(|_| {
            let m = max_gap + rng.below(tokens.len() - max_gap);
            let near = 1 + rng.below(max_gap - 1);
            let far = near + 1 + rng.below(max_gap - near);
            (m, near, far)
        })
        .collect();
    let outcomes = triples
        .par_iter()
        .map(|&(m, near, far)| {
            Ok((
                agrees(lm, dh, tokens, m, near)?,
                agrees(lm, dh, tokens, m, far)?,
            ))
        })
        .collect::<Result<Vec<(bool, bool)>>>()?;

    let blank = |g| ProbeRow {
        m_minus_j: g,
        ..Default::default()
    };
    let mut rows: Vec<ProbeRow> = (1..=max_gap).map(blank).collect();
    let mut far_rows: Vec<ProbeRow> = (1..=max_gap).map(blank).collect();
    let mut dominated = 0;
    for (&(_, near, far), &(a, b)) in triples.iter().zip(&outcomes) {
        rows[near - 1].n += 1;
        rows[near - 1].agree_count += a as usize;
        far_rows[far - 1].n += 1;
        far_rows[far - 1].agree_count += b as usize;
        dominated += (a >= b) as usize;
    }
    Ok(ProbeReport {
        rows,
        far_rows,
        dominance_fraction: if n_positions == 0 {
            0.0
        } else {
            dominated as f64 / n_positions as f64
        },
        n_positions,
    })
}

/// Agreement counts per gap, both cuts of every sampled triple pooled.
pub fn write_probe_csv<W: Write>(mut w: W, report: &ProbeReport) -> Result<()> {
    writeln!(w, "m_minus_j,n,agree_count")?;
    for (r, f) in report.rows.iter().zip(&report.far_rows) {
        writeln!(
            w,
            "{},{},{}",
            r.m_minus_j,
            r.n + f.n,
            r.agree_count + f.agree_count
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::verify_greedy;
    use crate::lm::LmDims;
    use crate::tensor::Params;

    fn pair() -> (TargetLm<f64>, DraftHead<f64>) {
        let dims = LmDims {
            window: 3,
            embed: 4,
            feature: 6,
            vocab: 5,
        };
        let mut lm = TargetLm::init(dims, &mut Rng::new(21));
        lm.scale(3.0);
        let mut dh = DraftHead::init(dims, &mut Rng::new(22));
        dh.scale(2.0);
        (lm, dh)
    }

    #[test]
    fn opt_k_matches_verification() {
        let (lm, dh) = pair();
        for prefix in [vec![1], vec![0, 2, 4], vec![3, 3, 3, 1]] {
            let k = opt_k(&lm, &dh, &prefix, 6).unwrap();
            assert_eq!(k, opt_k(&lm, &dh, &prefix, 6).unwrap());
            let f = lm.feature_at(&prefix, prefix.len() as isize - 2);
            let d = dh
                .draft_autoregress(
                    &lm,
                    *prefix.last().unwrap(),
                    &f,
                    k,
                    Sampling::Greedy,
                    &mut Rng::new(0),
                )
                .unwrap();
            assert_eq!(verify_greedy(&lm, &prefix, &d.tokens).unwrap().0, k);
        }
    }

    #[test]
    fn oracle_zero_waste() {
        let (lm, dh) = pair();
        let r = oracle_decode(&lm, &dh, &[2, 1], 50, None, 10).unwrap();
        assert!(r.traces.iter().all(|t| t.drafted == t.accepted));
        assert_eq!(r.output, lm.greedy_continuation(&[2, 1], 50, None).unwrap());
    }

    #[test]
    fn probe_counts() {
        let (lm, dh) = pair();
        let tokens: Vec<TokenId> = (0..200).map(|i| (i * 7 % 5) as TokenId).collect();
        let r = assumption1_probe(&lm, &dh, &tokens, 300, 6, &mut Rng::new(1)).unwrap();
        assert_eq!(r.rows.iter().map(|x| x.n).sum::<usize>(), 300);
        assert_eq!(r.far_rows.iter().map(|x| x.n).sum::<usize>(), 300);
        assert_eq!(r.rows.last().unwrap().n, 0);
        assert!((0.0..=1.0).contains(&r.dominance_fraction));
        let mut csv = Vec::new();
        write_probe_csv(&mut csv, &r).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 7);
        let pooled: usize = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(pooled, 600);
        assert!(assumption1_probe(&lm, &dh, &tokens[..5], 10, 6, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn gap_one_is_single_step_agreement() {
        let (lm, dh) = pair();
        let tokens: Vec<TokenId> = vec![0, 1, 2, 3, 4, 0, 1];
        let m = 5;
        let f = lm.feature_at(&tokens, m as isize - 2);
        let (_, q) = dh.step(&lm, tokens[m - 1], &f);
        let expect = q.argmax() == lm.forward(&tokens[..m]).unwrap().dist.argmax();
        assert_eq!(agrees(&lm, &dh, &tokens, m, 1).unwrap(), expect);
    }
}
