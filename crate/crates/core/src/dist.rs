//! Probability vectors over the vocabulary.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::vocab::TokenId;

/// Tolerance on the total mass of a [`Dist`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A probability distribution over token ids `0..len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dist {
    probs: Vec<f64>,
}

impl Dist {
    /// Wraps an already-normalized vector, checking the invariants.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("entry {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("mass {total}")));
        }
        Ok(Self { probs })
    }

    /// Divides a non-negative vector by its sum.
    pub fn normalize(raw: &[f64]) -> Result<Self> {
        if let Some(p) = raw.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("entry {p}")));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateDistribution);
        }
        Ok(Self {
            probs: raw.iter().map(|p| p / total).collect(),
        })
    }

    /// Numerically stable softmax of `logits`.
    pub fn softmax(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Self {
            probs: exps.into_iter().map(|e| e / total).collect(),
        }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn one_hot(n: usize, t: TokenId) -> Self {
        let mut probs = vec![0.0; n];
        probs[t as usize] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn prob(&self, t: TokenId) -> f64 {
        self.probs[t as usize]
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as TokenId
    }

    /// Inverse-CDF draw over index order using exactly one uniform.
    pub fn sample(&self, rng: &mut Rng) -> TokenId {
        let u = rng.next_f64();
        let mut cum = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            cum += p;
            if u < cum {
                return i as TokenId;
            }
        }
        // u landed in the rounding gap above the accumulated mass.
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as TokenId
    }

    /// `normalize(max(0, p - q))`, the distribution resampled after a rejection.
    pub fn residual(p: &Dist, q: &Dist) -> Result<Dist> {
        if p.len() != q.len() {
            return Err(Error::DimMismatch(format!(
                "residual of sizes {} and {}",
                p.len(),
                q.len()
            )));
        }
        let diff: Vec<f64> = p
            .probs
            .iter()
            .zip(&q.probs)
            .map(|(a, b)| (a - b).max(0.0))
            .collect();
        match Dist::normalize(&diff) {
            Err(Error::DegenerateDistribution) => Err(Error::DegenerateResidual),
            other => other,
        }
    }
}

/// How a token is chosen from a distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Sampling {
    /// Argmax (temperature 0).
    #[default]
    Greedy,
    /// One inverse-CDF draw from the distribution.
    Stochastic,
}

impl Sampling {
    pub fn pick(self, d: &Dist, rng: &mut Rng) -> TokenId {
        match self {
            Sampling::Greedy => d.argmax(),
            Sampling::Stochastic => d.sample(rng),
        }
    }
}

pub fn normalize(raw: &[f64]) -> Result<Dist> {
    Dist::normalize(raw)
}

pub fn residual_dist(p: &Dist, p_hat: &Dist) -> Result<Dist> {
    Dist::residual(p, p_hat)
}
