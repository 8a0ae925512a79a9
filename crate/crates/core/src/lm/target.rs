//! Fixed-window MLP language model.
//!
//! The feature at position `p` is `tanh(W1 · [E[t_{p-w+1}]; …; E[t_p]] + b1)`
//! and the next-token distribution is `softmax(W_head · f + b_head)`.
//! Positions before the start of the sequence read the pad token, whose
//! embedding is the zero vector and is not trainable.

use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{add_assign, Matrix, Params};
use crate::vocab::{check_ids, TokenId, TokenSeq};

use super::train::{run_sgd, TrainConfig, TrainReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LmDims {
    pub window: usize,
    pub embed: usize,
    pub feature: usize,
    pub vocab: usize,
}

impl LmDims {
    pub const DEFAULT_WINDOW: usize = 8;
    pub const DEFAULT_EMBED: usize = 32;
    pub const DEFAULT_FEATURE: usize = 64;

    pub fn with_vocab(vocab: usize) -> Self {
        Self {
            window: Self::DEFAULT_WINDOW,
            embed: Self::DEFAULT_EMBED,
            feature: Self::DEFAULT_FEATURE,
            vocab,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.embed == 0 || self.feature == 0 || self.vocab == 0 {
            return Err(Error::InvalidArgument(format!(
                "all model dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Reserved pad id, one past the last real token.
    pub fn pad_id(&self) -> TokenId {
        self.vocab as TokenId
    }
}

/// Next-token distribution and feature vector at one position.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetOutput<S> {
    pub dist: Dist,
    pub feature: Vec<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetLm<S = f64> {
    dims: LmDims,
    embedding: Matrix<S>,
    hidden: Matrix<S>,
    hidden_bias: Vec<S>,
    head: Matrix<S>,
    head_bias: Vec<S>,
    pad: Vec<S>,
}

impl<S: Scalar> TargetLm<S> {
    pub fn zeros(dims: LmDims) -> Self {
        Self {
            dims,
            embedding: Matrix::zeros(dims.vocab, dims.embed),
            hidden: Matrix::zeros(dims.feature, dims.window * dims.embed),
            hidden_bias: vec![S::zero(); dims.feature],
            head: Matrix::zeros(dims.vocab, dims.feature),
            head_bias: vec![S::zero(); dims.vocab],
            pad: vec![S::zero(); dims.embed],
        }
    }

    /// Uniform fan-in scaled initialization.
    pub fn init(dims: LmDims, rng: &mut Rng) -> Self {
        let fan_in = (dims.window * dims.embed) as f64;
        Self {
            embedding: Matrix::random(dims.vocab, dims.embed, 1.0, rng),
            hidden: Matrix::random(
                dims.feature,
                dims.window * dims.embed,
                1.0 / fan_in.sqrt(),
                rng,
            ),
            head: Matrix::random(
                dims.vocab,
                dims.feature,
                1.0 / (dims.feature as f64).sqrt(),
                rng,
            ),
            ..Self::zeros(dims)
        }
    }

    pub fn dims(&self) -> LmDims {
        self.dims
    }

    /// Embedding row of `t`; the pad id maps to the zero vector.
    #[inline]
    pub fn embedding_of(&self, t: TokenId) -> &[S] {
        if t == self.dims.pad_id() {
            &self.pad
        } else {
            self.embedding.row(t as usize)
        }
    }

    /// Concatenated window of embeddings ending at `pos` (negative positions read pad).
    fn window_input(&self, seq: &[TokenId], pos: isize, out: &mut [S]) {
        let w = self.dims.window as isize;
        let e = self.dims.embed;
        for slot in 0..w {
            let p = pos - (w - 1) + slot;
            let t = if p < 0 {
                self.dims.pad_id()
            } else {
                seq[p as usize]
            };
            out[slot as usize * e..(slot as usize + 1) * e].copy_from_slice(self.embedding_of(t));
        }
    }

    fn feature_from_input(&self, input: &[S]) -> Vec<S> {
        let mut f = vec![S::zero(); self.dims.feature];
        self.hidden.affine(input, &self.hidden_bias, &mut f);
        for v in f.iter_mut() {
            *v = v.tanh();
        }
        f
    }

    /// Feature at `pos`; any negative position gives the all-pad feature.
    pub fn feature_at(&self, seq: &[TokenId], pos: isize) -> Vec<S> {
        debug_assert!(pos < seq.len() as isize);
        let mut input = vec![S::zero(); self.dims.window * self.dims.embed];
        self.window_input(seq, pos.max(-1), &mut input);
        self.feature_from_input(&input)
    }

    pub fn logits(&self, feature: &[S]) -> Vec<S> {
        let mut z = vec![S::zero(); self.dims.vocab];
        self.head.affine(feature, &self.head_bias, &mut z);
        z
    }

    /// Next-token distribution from a feature through the shared LM head.
    pub fn head_dist(&self, feature: &[S]) -> Dist {
        let z: Vec<f64> = self.logits(feature).into_iter().map(S::as_f64).collect();
        Dist::softmax(&z)
    }

    /// `out += W_headᵀ · dlogits`.
    pub(crate) fn head_backward(&self, dlogits: &[S], out: &mut [S]) {
        self.head.transpose_mul_acc(dlogits, out);
    }

    pub fn check_tokens(&self, ids: &[TokenId]) -> Result<()> {
        check_ids(ids, self.dims.vocab)
    }

    /// Distribution and feature at the last position of `prefix`.
    pub fn forward(&self, prefix: &[TokenId]) -> Result<TargetOutput<S>> {
        if prefix.is_empty() {
            return Err(Error::InvalidArgument("empty prefix".into()));
        }
        self.check_tokens(prefix)?;
        let feature = self.feature_at(prefix, prefix.len() as isize - 1);
        Ok(TargetOutput {
            dist: self.head_dist(&feature),
            feature,
        })
    }

    /// Outputs for positions `start..seq.len()` in one pass.
    pub fn forward_range(&self, seq: &[TokenId], start: usize) -> Result<Vec<TargetOutput<S>>> {
        self.check_tokens(seq)?;
        Ok((start..seq.len())
            .map(|p| {
                let feature = self.feature_at(seq, p as isize);
                TargetOutput {
                    dist: self.head_dist(&feature),
                    feature,
                }
            })
            .collect())
    }

    /// Outputs for every position of `prefix`.
    pub fn forward_batch(&self, prefix: &[TokenId]) -> Result<Vec<TargetOutput<S>>> {
        self.forward_range(prefix, 0)
    }

    /// `n` argmax tokens after `prefix`, stopping after `terminator` if given.
    pub fn greedy_continuation(
        &self,
        prefix: &[TokenId],
        n: usize,
        terminator: Option<TokenId>,
    ) -> Result<TokenSeq> {
        if prefix.is_empty() {
            return Err(Error::InvalidArgument("empty prefix".into()));
        }
        self.check_tokens(prefix)?;
        let mut seq = prefix.to_vec();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let f = self.feature_at(&seq, seq.len() as isize - 1);
            let t = self.head_dist(&f).argmax();
            seq.push(t);
            out.push(t);
            if Some(t) == terminator {
                break;
            }
        }
        Ok(out)
    }

    /// Cross-entropy of predicting `seq[pos + 1]` from the window ending at
    /// `pos`, with its gradient added into `grads`.
    pub fn loss_grad(&self, seq: &[TokenId], pos: usize, grads: &mut Self) -> f64 {
        let d = self.dims;
        let target = seq[pos + 1] as usize;
        let mut input = vec![S::zero(); d.window * d.embed];
        self.window_input(seq, pos as isize, &mut input);
        let h = self.feature_from_input(&input);
        let dist = self.head_dist(&h);
        let loss = -dist.probs()[target].max(f64::MIN_POSITIVE).ln();

        let mut dlogits: Vec<S> = dist.probs().iter().map(|&p| S::cast(p)).collect();
        dlogits[target] -= S::one();
        grads.head.outer_acc(&dlogits, &h);
        add_assign(&mut grads.head_bias, &dlogits);

        let mut dz = vec![S::zero(); d.feature];
        self.head.transpose_mul_acc(&dlogits, &mut dz);
        for (g, &hv) in dz.iter_mut().zip(&h) {
            *g *= S::one() - hv * hv;
        }
        grads.hidden.outer_acc(&dz, &input);
        add_assign(&mut grads.hidden_bias, &dz);

        let mut dx = vec![S::zero(); d.window * d.embed];
        self.hidden.transpose_mul_acc(&dz, &mut dx);
        let w = d.window as isize;
        for slot in 0..w {
            let p = pos as isize - (w - 1) + slot;
            if p < 0 {
                continue;
            }
            let s = slot as usize;
            add_assign(
                grads.embedding.row_mut(seq[p as usize] as usize),
                &dx[s * d.embed..(s + 1) * d.embed],
            );
        }
        loss
    }

    pub fn cast<T: Scalar>(&self) -> TargetLm<T> {
        TargetLm {
            dims: self.dims,
            embedding: self.embedding.cast(),
            hidden: self.hidden.cast(),
            hidden_bias: crate::tensor::cast_vec(&self.hidden_bias),
            head: self.head.cast(),
            head_bias: crate::tensor::cast_vec(&self.head_bias),
            pad: vec![T::zero(); self.dims.embed],
        }
    }
}

impl<S: Scalar> Params<S> for TargetLm<S> {
    fn tensors(&self) -> Vec<(&'static str, &[S])> {
        vec![
            ("embedding", self.embedding.data()),
            ("hidden", self.hidden.data()),
            ("hidden_bias", &self.hidden_bias),
            ("head", self.head.data()),
            ("head_bias", &self.head_bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [S])> {
        vec![
            ("embedding", self.embedding.data_mut()),
            ("hidden", self.hidden.data_mut()),
            ("hidden_bias", &mut self.hidden_bias),
            ("head", self.head.data_mut()),
            ("head_bias", &mut self.head_bias),
        ]
    }
}

/// Trains a target model on a token stream by next-token cross-entropy.
pub fn train_lm<S: Scalar>(
    tokens: &[TokenId],
    dims: LmDims,
    cfg: &TrainConfig,
) -> Result<(TargetLm<S>, TrainReport)> {
    dims.validate()?;
    check_ids(tokens, dims.vocab)?;
    if tokens.len() <= dims.window + 1 {
        return Err(Error::CorpusTooShort(format!(
            "{} tokens for window {}",
            tokens.len(),
            dims.window
        )));
    }
    let mut model = TargetLm::init(dims, &mut Rng::new(cfg.init_seed()));
    let report = run_sgd(&mut model, tokens.len() - 1, cfg, |m, i, g| {
        m.loss_grad(tokens, i, g)
    })?;
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn tiny(vocab: usize) -> LmDims {
        LmDims {
            window: 3,
            embed: 4,
            feature: 6,
            vocab,
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let lm = TargetLm::<f64>::zeros(tiny(5));
        let out = lm.forward(&[1, 2, 3]).unwrap();
        for &p in out.dist.probs() {
            assert!((p - 0.2).abs() < 1e-15);
        }
        assert!(out.feature.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let lm = TargetLm::<f64>::init(tiny(5), &mut Rng::new(3));
        assert_eq!(
            lm.forward(&[0, 4, 2]).unwrap(),
            lm.forward(&[0, 4, 2]).unwrap()
        );
    }

    #[test]
    fn out_of_range_token_errors() {
        let lm = TargetLm::<f64>::zeros(tiny(5));
        assert!(matches!(
            lm.forward(&[1, 5]),
            Err(Error::TokenOutOfRange { id: 5, vocab: 5 })
        ));
        assert!(lm.forward(&[]).is_err());
    }

    #[test]
    fn batch_matches_single() {
        let lm = TargetLm::<f64>::init(tiny(5), &mut Rng::new(4));
        let seq = [0, 1, 2, 3, 4, 0, 1];
        let batch = lm.forward_batch(&seq).unwrap();
        assert_eq!(batch.len(), seq.len());
        for (i, out) in batch.iter().enumerate() {
            assert_eq!(out, &lm.forward(&seq[..=i]).unwrap());
        }
    }

    proptest! {
        #[test]
        fn batch_matches_single_up_to_64(seq in proptest::collection::vec(0u32..5, 1..=64), seed in 0u64..1000) {
            let lm = TargetLm::<f64>::init(tiny(5), &mut Rng::new(seed));
            let batch = lm.forward_batch(&seq).unwrap();
            prop_assert_eq!(batch.len(), seq.len());
            for (i, out) in batch.iter().enumerate() {
                prop_assert_eq!(out, &lm.forward(&seq[..=i]).unwrap());
            }
        }
    }

    #[test]
    fn greedy_continuation_chains_forward() {
        let lm = TargetLm::<f64>::init(tiny(5), &mut Rng::new(5));
        let prefix = vec![1, 2];
        assert!(lm.greedy_continuation(&prefix, 0, None).unwrap().is_empty());
        let five = lm.greedy_continuation(&prefix, 5, None).unwrap();
        let mut seq = prefix.clone();
        for &t in &five {
            assert_eq!(lm.forward(&seq).unwrap().dist.argmax(), t);
            seq.push(t);
        }
    }

    #[test]
    fn greedy_continuation_stops_at_terminator() {
        let lm = TargetLm::<f64>::zeros(tiny(3));
        // Uniform everywhere, so argmax is always token 0.
        assert_eq!(lm.greedy_continuation(&[1], 4, Some(0)).unwrap(), vec![0]);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let tokens: Vec<TokenId> = (0..40).map(|i| i % 2).collect();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let (m, _) = train_lm::<f64>(&tokens, tiny(2), &cfg).unwrap();
        assert_eq!(m, TargetLm::init(tiny(2), &mut Rng::new(cfg.init_seed())));
    }

    #[test]
    fn too_short_corpus() {
        assert!(matches!(
            train_lm::<f64>(&[0, 1, 0], tiny(2), &TrainConfig::default()),
            Err(Error::CorpusTooShort(_))
        ));
    }
}
