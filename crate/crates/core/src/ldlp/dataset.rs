//! Training data for the length predictor.
//!
//! For a prompt, the target's greedy continuation is generated once. Each cut
//! then replays one decode iteration: the draft head is seeded with the token
//! after the last validated position and that position's true target feature,
//! drafts a fixed number of tokens, and the label is how many of them agree
//! with the target's own continuation.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::dist::Sampling;
use crate::error::{Error, Result};
use crate::lm::{DraftHead, TargetLm};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::vocab::{TokenId, TokenSeq};

const MAGIC: &[u8; 5] = b"LDLP1";

/// `(e, f) → k°`: embedding of the last validated token, its target feature,
/// and the number of draft tokens the target accepts from there.
#[derive(Clone, Debug, PartialEq)]
pub struct LdlpSample<S = f64> {
    pub embedding: Vec<S>,
    pub feature: Vec<S>,
    pub label: u32,
}

/// Length of the longest common prefix.
pub fn lcp_len(a: &[TokenId], b: &[TokenId]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// One cut of one prompt: `full = prompt ++ formal`, the last validated
/// position is `last`, and the draft starts from `full[last + 1]`.
struct Cut<'a> {
    full: &'a [TokenId],
    last: usize,
}

/// Collects one sample per generated position of every prompt.
///
/// `terminator`, if set, ends the target's continuation early; labels are then
/// capped by the remaining continuation. Prompts that are empty are skipped.
pub fn collect_dataset<S: Scalar>(
    lm: &TargetLm<S>,
    dh: &DraftHead<S>,
    prompts: &[TokenSeq],
    n_out: usize,
    k_max_data: usize,
    terminator: Option<TokenId>,
) -> Result<Vec<LdlpSample<S>>> {
    dh.check_compatible(lm)?;
    let fulls: Vec<TokenSeq> = prompts
        .par_iter()
        .map(|p| -> Result<TokenSeq> {
            if p.is_empty() {
                return Ok(Vec::new());
            }
            let formal = lm.greedy_continuation(p, n_out + k_max_data + 1, terminator)?;
            let mut full = p.clone();
            full.extend_from_slice(&formal);
            Ok(full)
        })
        .collect::<Result<_>>()?;

    let mut cuts = Vec::new();
    for (prompt, full) in prompts.iter().zip(&fulls) {
        if full.is_empty() {
            continue;
        }
        let p = prompt.len();
        let generated = full.len() - p;
        let ended = terminator.is_some() && full.last().copied() == terminator;
        // Cut j: the draft is seeded with the j-th generated token.
        let max_j = if ended { generated - 1 } else { generated }.min(n_out);
        for j in 1..=max_j {
            cuts.push(Cut {
                full,
                last: p + j - 2,
            });
        }
    }

    let samples = cuts
        .par_iter()
        .map(|c| -> Result<LdlpSample<S>> {
            let feature = lm.feature_at(c.full, c.last as isize);
            let seed = c.full[c.last + 1];
            let draft = dh.draft_autoregress(
                lm,
                seed,
                &feature,
                k_max_data,
                Sampling::Greedy,
                &mut Rng::new(0),
            )?;
            let label = lcp_len(&draft.tokens, &c.full[c.last + 2..]);
            Ok(LdlpSample {
                embedding: lm.embedding_of(c.full[c.last]).to_vec(),
                feature,
                label: label as u32,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(samples)
}

pub fn save_dataset<S: Scalar>(samples: &[LdlpSample<S>], path: impl AsRef<Path>) -> Result<()> {
    let (d_e, d_f) = samples
        .first()
        .map(|s| (s.embedding.len(), s.feature.len()))
        .unwrap_or((0, 0));
    let mut out = Vec::with_capacity(17 + samples.len() * (8 * (d_e + d_f) + 4));
    out.extend_from_slice(MAGIC);
    for v in [d_e, d_f, samples.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for s in samples {
        if s.embedding.len() != d_e || s.feature.len() != d_f {
            return Err(Error::DimMismatch("samples of different sizes".into()));
        }
        for v in s.embedding.iter().chain(&s.feature) {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        out.extend_from_slice(&s.label.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn load_dataset<S: Scalar>(path: impl AsRef<Path>) -> Result<Vec<LdlpSample<S>>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = crate::lm::container::Reader::new(&bytes);
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("bad magic, expected LDLP1".into()));
    }
    let d_e = r.u32()? as usize;
    let d_f = r.u32()? as usize;
    let n = r.u32()? as usize;
    let mut samples = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let mut read = |k: usize| {
            (0..k)
                .map(|_| r.f64().map(S::cast))
                .collect::<Result<Vec<S>>>()
        };
        let embedding = read(d_e)?;
        let feature = read(d_f)?;
        let label = r.u32()?;
        samples.push(LdlpSample {
            embedding,
            feature,
            label,
        });
    }
    r.finish()?;
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::LmDims;
    use crate::tensor::Params;

    #[test]
    fn lcp_examples() {
        assert_eq!(lcp_len(&[0, 1, 2], &[0, 1, 3]), 2);
        assert_eq!(lcp_len(&[], &[4, 5]), 0);
        assert_eq!(lcp_len(&[1, 2, 3, 4, 5], &[1, 2, 3, 4, 5]), 5);
    }

    fn pair() -> (TargetLm<f64>, DraftHead<f64>) {
        let dims = LmDims {
            window: 3,
            embed: 4,
            feature: 6,
            vocab: 5,
        };
        let mut lm = TargetLm::init(dims, &mut Rng::new(11));
        lm.scale(3.0);
        (lm, DraftHead::init(dims, &mut Rng::new(12)))
    }

    #[test]
    fn one_sample_per_cut_with_bounded_labels() {
        let (lm, dh) = pair();
        let prompts = vec![vec![1, 2, 3], vec![4], vec![]];
        let s = collect_dataset(&lm, &dh, &prompts, 7, 4, None).unwrap();
        assert_eq!(s.len(), 14);
        assert!(s.iter().all(|x| x.label <= 4));
        assert!(s
            .iter()
            .all(|x| x.embedding.len() == 4 && x.feature.len() == 6));
    }

    #[test]
    fn labels_match_lcp_against_greedy() {
        let (lm, dh) = pair();
        let prompt = vec![0, 3];
        let s = collect_dataset(&lm, &dh, std::slice::from_ref(&prompt), 5, 3, None).unwrap();
        let full: Vec<TokenId> = prompt
            .iter()
            .copied()
            .chain(lm.greedy_continuation(&prompt, 20, None).unwrap())
            .collect();
        for (j, sample) in s.iter().enumerate() {
            let last = prompt.len() + j - 1;
            let f = lm.feature_at(&full, last as isize);
            assert_eq!(sample.feature, f);
            let d = dh
                .draft_autoregress(
                    &lm,
                    full[last + 1],
                    &f,
                    3,
                    Sampling::Greedy,
                    &mut Rng::new(0),
                )
                .unwrap();
            assert_eq!(sample.label as usize, lcp_len(&d.tokens, &full[last + 2..]));
        }
    }

    #[test]
    fn dataset_file_round_trip() {
        let (lm, dh) = pair();
        let s = collect_dataset(&lm, &dh, &[vec![1, 1]], 6, 3, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        save_dataset(&s, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..5], b"LDLP1");
        assert_eq!(bytes.len(), 17 + 6 * (8 * 10 + 4));
        assert_eq!(load_dataset::<f64>(&path).unwrap(), s);
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(load_dataset::<f64>(&path).is_err());
    }
}
