use crate::error::{Error, Result};
use crate::lm::{run_sgd, LmDims, TrainConfig, TrainReport};
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::dataset::LdlpSample;
use super::model::{HeadKind, LdlpModel};

#[derive(Clone, Debug, PartialEq)]
pub struct LdlpTrainConfig {
    pub train: TrainConfig,
    /// Weight on under-predictions; 1 makes the loss plain L1.
    pub lambda: f64,
    pub head: HeadKind,
    /// Largest length class of the classification head.
    pub k_max: usize,
}

impl Default for LdlpTrainConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                learning_rate: 0.01,
                epochs: 5,
                batch_size: 32,
                ..Default::default()
            },
            lambda: 2.0,
            head: HeadKind::Regression,
            k_max: 8,
        }
    }
}

impl LdlpTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.lambda >= 1.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "penalty coefficient must be >= 1, got {}",
                self.lambda
            )));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidArgument("k_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// Trains a length predictor for models of size `dims` on `samples`.
pub fn train_ldlp<S: Scalar>(
    samples: &[LdlpSample<S>],
    dims: LmDims,
    cfg: &LdlpTrainConfig,
) -> Result<(LdlpModel<S>, TrainReport)> {
    cfg.validate()?;
    dims.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(bad) = samples
        .iter()
        .find(|s| s.embedding.len() != dims.embed || s.feature.len() != dims.feature)
    {
        return Err(Error::DimMismatch(format!(
            "sample of sizes ({}, {}) for models of ({}, {})",
            bad.embedding.len(),
            bad.feature.len(),
            dims.embed,
            dims.feature
        )));
    }
    let mut model = LdlpModel::init(
        dims,
        cfg.head,
        cfg.k_max + 1,
        &mut Rng::new(cfg.train.init_seed()),
    );
    let report = run_sgd(&mut model, samples.len(), &cfg.train, |m, i, g| {
        let s = &samples[i];
        m.loss_grad(&s.embedding, &s.feature, s.label as usize, cfg.lambda, g)
    })?;
    Ok((model, report))
}
