//! Feature-level draft head.
//!
//! The head maps the concatenation of a token embedding and the feature that
//! produced it to a prediction of the next feature,
//! `f̂ = tanh(W_d · [E[t]; f] + b_d)`, and reads tokens out of `f̂` through
//! the target's own LM head. Embedding and LM head are borrowed from the
//! [`TargetLm`] at every call and never copied into the head.

use rayon::prelude::*;

use crate::dist::{Dist, Sampling};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{add_assign, Matrix, Params};
use crate::vocab::{check_ids, TokenId, TokenSeq};

use super::target::{LmDims, TargetLm};
use super::train::{run_sgd, TrainConfig, TrainReport};

#[derive(Clone, Debug, PartialEq)]
pub struct DraftHead<S = f64> {
    dims: LmDims,
    weights: Matrix<S>,
    bias: Vec<S>,
}

/// Tokens proposed by the head together with the distribution each was
/// chosen from and the predicted feature that produced it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Draft<S> {
    pub tokens: TokenSeq,
    pub dists: Vec<Dist>,
    pub features: Vec<Vec<S>>,
}

impl<S> Draft<S> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Σ log p̂ of the drafted tokens.
    pub fn cum_logprob(&self) -> f64 {
        self.tokens
            .iter()
            .zip(&self.dists)
            .map(|(&t, d)| d.prob(t).ln())
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DraftTrainConfig {
    pub train: TrainConfig,
    /// Weight of the feature-regression term.
    pub alpha: f64,
}

impl Default for DraftTrainConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            alpha: 1.0,
        }
    }
}

impl<S: Scalar> DraftHead<S> {
    pub fn zeros(dims: LmDims) -> Self {
        Self {
            dims,
            weights: Matrix::zeros(dims.feature, dims.embed + dims.feature),
            bias: vec![S::zero(); dims.feature],
        }
    }

    pub fn init(dims: LmDims, rng: &mut Rng) -> Self {
        let fan_in = (dims.embed + dims.feature) as f64;
        Self {
            weights: Matrix::random(
                dims.feature,
                dims.embed + dims.feature,
                1.0 / fan_in.sqrt(),
                rng,
            ),
            ..Self::zeros(dims)
        }
    }

    pub fn dims(&self) -> LmDims {
        self.dims
    }

    pub fn check_compatible(&self, lm: &TargetLm<S>) -> Result<()> {
        if self.dims != lm.dims() {
            return Err(Error::VocabMismatch(format!(
                "draft head built for {:?}, target is {:?}",
                self.dims,
                lm.dims()
            )));
        }
        Ok(())
    }

    fn input(&self, lm: &TargetLm<S>, token: TokenId, feature: &[S]) -> Vec<S> {
        let mut x = Vec::with_capacity(self.dims.embed + self.dims.feature);
        x.extend_from_slice(lm.embedding_of(token));
        x.extend_from_slice(feature);
        x
    }

    fn predict_feature(&self, x: &[S]) -> Vec<S> {
        let mut f = vec![S::zero(); self.dims.feature];
        self.weights.affine(x, &self.bias, &mut f);
        for v in f.iter_mut() {
            *v = v.tanh();
        }
        f
    }

    /// One autoregressive step: predicted next feature and its token distribution.
    pub fn step(&self, lm: &TargetLm<S>, token: TokenId, feature: &[S]) -> (Vec<S>, Dist) {
        let f_hat = self.predict_feature(&self.input(lm, token, feature));
        let dist = lm.head_dist(&f_hat);
        (f_hat, dist)
    }

    /// Drafts `k` tokens starting from `seed_token` whose producing feature is
    /// `seed_feature`. Later steps condition on the head's own predicted
    /// features.
    pub fn draft_autoregress(
        &self,
        lm: &TargetLm<S>,
        seed_token: TokenId,
        seed_feature: &[S],
        k: usize,
        mode: Sampling,
        rng: &mut Rng,
    ) -> Result<Draft<S>> {
        self.check_compatible(lm)?;
        check_ids(&[seed_token], self.dims.vocab + 1)?;
        if seed_feature.len() != self.dims.feature {
            return Err(Error::DimMismatch(format!(
                "seed feature has {} entries, expected {}",
                seed_feature.len(),
                self.dims.feature
            )));
        }
        let mut draft = Draft {
            tokens: Vec::with_capacity(k),
            dists: Vec::with_capacity(k),
            features: Vec::with_capacity(k),
        };
        let mut token = seed_token;
        let mut feature = seed_feature.to_vec();
        for _ in 0..k {
            let (f_hat, dist) = self.step(lm, token, &feature);
            token = mode.pick(&dist, rng);
            draft.tokens.push(token);
            draft.dists.push(dist);
            draft.features.push(f_hat.clone());
            feature = f_hat;
        }
        Ok(draft)
    }

    /// `α·‖f̂ − f_next‖² − Σ p_target log q`, gradient added into `grads`.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_grad(
        &self,
        lm: &TargetLm<S>,
        token: TokenId,
        feature: &[S],
        next_feature: &[S],
        target_dist: &Dist,
        alpha: f64,
        grads: &mut Self,
    ) -> f64 {
        let x = self.input(lm, token, feature);
        let f_hat = self.predict_feature(&x);
        let q = lm.head_dist(&f_hat);

        let mut loss = 0.0;
        let mut df: Vec<S> = f_hat
            .iter()
            .zip(next_feature)
            .map(|(&a, &b)| {
                let d = a - b;
                loss += alpha * (d * d).as_f64();
                S::cast(2.0 * alpha) * d
            })
            .collect();
        for (&p, &qv) in target_dist.probs().iter().zip(q.probs()) {
            if p > 0.0 {
                loss -= p * qv.max(f64::MIN_POSITIVE).ln();
            }
        }
        let dlogits: Vec<S> = q
            .probs()
            .iter()
            .zip(target_dist.probs())
            .map(|(&qv, &p)| S::cast(qv - p))
            .collect();
        lm.head_backward(&dlogits, &mut df);
        for (g, &fv) in df.iter_mut().zip(&f_hat) {
            *g *= S::one() - fv * fv;
        }
        grads.weights.outer_acc(&df, &x);
        add_assign(&mut grads.bias, &df);
        loss
    }

    pub fn cast<T: Scalar>(&self) -> DraftHead<T> {
        DraftHead {
            dims: self.dims,
            weights: self.weights.cast(),
            bias: crate::tensor::cast_vec(&self.bias),
        }
    }
}

impl<S: Scalar> Params<S> for DraftHead<S> {
    fn tensors(&self) -> Vec<(&'static str, &[S])> {
        vec![("weights", self.weights.data()), ("bias", &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [S])> {
        vec![
            ("weights", self.weights.data_mut()),
            ("bias", &mut self.bias),
        ]
    }
}

/// Trains a draft head against a frozen target, teacher-forced on the
/// target's features over `tokens`.
pub fn train_draft<S: Scalar>(
    tokens: &[TokenId],
    lm: &TargetLm<S>,
    cfg: &DraftTrainConfig,
) -> Result<(DraftHead<S>, TrainReport)> {
    lm.check_tokens(tokens)?;
    if tokens.len() < 3 {
        return Err(Error::CorpusTooShort(format!("{} tokens", tokens.len())));
    }
    let features: Vec<Vec<S>> = (0..tokens.len())
        .into_par_iter()
        .map(|p| lm.feature_at(tokens, p as isize))
        .collect();
    let mut head = DraftHead::init(lm.dims(), &mut Rng::new(cfg.train.init_seed()));
    let report = run_sgd(&mut head, tokens.len() - 2, &cfg.train, |h, i, g| {
        let target_dist = lm.head_dist(&features[i + 1]);
        h.loss_grad(
            lm,
            tokens[i + 1],
            &features[i],
            &features[i + 1],
            &target_dist,
            cfg.alpha,
            g,
        )
    })?;
    Ok((head, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(vocab: usize) -> LmDims {
        LmDims {
            window: 3,
            embed: 4,
            feature: 6,
            vocab,
        }
    }

    #[test]
    fn zero_length_draft_is_empty() {
        let lm = TargetLm::<f64>::init(tiny(4), &mut Rng::new(1));
        let dh = DraftHead::init(tiny(4), &mut Rng::new(2));
        let f = lm.feature_at(&[1, 2], 1);
        let d = dh
            .draft_autoregress(&lm, 2, &f, 0, Sampling::Greedy, &mut Rng::new(0))
            .unwrap();
        assert!(d.is_empty() && d.dists.is_empty() && d.features.is_empty());
    }

    #[test]
    fn zero_head_drafts_uniform_token_zero() {
        let lm = TargetLm::<f64>::zeros(tiny(4));
        let dh = DraftHead::zeros(tiny(4));
        let f = vec![0.3; 6];
        let d = dh
            .draft_autoregress(&lm, 1, &f, 5, Sampling::Greedy, &mut Rng::new(0))
            .unwrap();
        assert_eq!(d.tokens, vec![0; 5]);
        for dist in &d.dists {
            assert!(dist.probs().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn incompatible_dims_rejected() {
        let lm = TargetLm::<f64>::zeros(tiny(4));
        let dh = DraftHead::<f64>::zeros(tiny(5));
        assert!(dh
            .draft_autoregress(&lm, 0, &[0.0; 6], 1, Sampling::Greedy, &mut Rng::new(0))
            .is_err());
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let tokens: Vec<TokenId> = (0..30).map(|i| i % 3).collect();
        let lm = TargetLm::<f64>::init(tiny(3), &mut Rng::new(1));
        let cfg = DraftTrainConfig {
            train: TrainConfig {
                epochs: 0,
                ..Default::default()
            },
            alpha: 1.0,
        };
        let (h, _) = train_draft(&tokens, &lm, &cfg).unwrap();
        assert_eq!(
            h,
            DraftHead::init(tiny(3), &mut Rng::new(cfg.train.init_seed()))
        );
    }

    #[test]
    fn training_leaves_target_untouched() {
        let tokens: Vec<TokenId> = (0..60).map(|i| (i * 7 % 5) as TokenId % 3).collect();
        let lm = TargetLm::<f64>::init(tiny(3), &mut Rng::new(1));
        let before = lm.clone();
        let cfg = DraftTrainConfig::default();
        train_draft(&tokens, &lm, &cfg).unwrap();
        assert_eq!(before, lm);
    }
}
