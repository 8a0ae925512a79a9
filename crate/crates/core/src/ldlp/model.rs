//! Residual MLP mapping a token embedding and a target feature to a draft length.
//!
//! With `x₀ = [e; f]` and width `h = d_e + d_f`, each of the three layers
//! computes `x_{l+1} = x_l + tanh(W_l · x_l + b_l)`, and a final linear map
//! produces either one scalar (regression) or one logit per length
//! (classification).

use crate::error::{Error, Result};
use crate::lm::container::{expect_kind, write_header, write_tensors, Reader};
use crate::lm::{LmDims, ModelKind, Persist};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{add_assign, Matrix, Params};

pub const LAYERS: usize = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HeadKind {
    /// One scalar output, trained with the penalized L1 loss.
    #[default]
    Regression,
    /// One logit per length `0..=k_max`, trained with cross-entropy.
    Classification,
}

impl HeadKind {
    fn model_kind(self) -> ModelKind {
        match self {
            Self::Regression => ModelKind::LdlpRegression,
            Self::Classification => ModelKind::LdlpClassification,
        }
    }
}

/// Rounds half away from zero.
pub fn round_half_away(x: f64) -> f64 {
    if x >= 0.0 {
        (x + 0.5).floor()
    } else {
        (x - 0.5).ceil()
    }
}

/// `λ·|k̄ − k°|` when the prediction falls short of the label, `|k̄ − k°|` otherwise.
pub fn penalized_l1(raw: f64, label: usize, lambda: f64) -> f64 {
    let diff = raw - label as f64;
    if diff < 0.0 {
        -lambda * diff
    } else {
        diff
    }
}

/// Derivative of [`penalized_l1`] with respect to the raw prediction.
pub(crate) fn penalized_l1_slope(raw: f64, label: usize, lambda: f64) -> f64 {
    let diff = raw - label as f64;
    if diff < 0.0 {
        -lambda
    } else if diff > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LdlpModel<S = f64> {
    dims: LmDims,
    head: HeadKind,
    layers: Vec<Matrix<S>>,
    biases: Vec<Vec<S>>,
    out: Matrix<S>,
    out_bias: Vec<S>,
}

/// Activations kept for the backward pass.
pub(crate) struct Cache<S> {
    xs: Vec<Vec<S>>,
    acts: Vec<Vec<S>>,
    pub out: Vec<S>,
}

impl<S: Scalar> LdlpModel<S> {
    /// Model with all weights zero. `n_out` is 1 for regression and the number
    /// of length classes for classification.
    pub fn zeros(dims: LmDims, head: HeadKind, n_out: usize) -> Self {
        let h = dims.embed + dims.feature;
        let n_out = match head {
            HeadKind::Regression => 1,
            HeadKind::Classification => n_out,
        };
        Self {
            dims,
            head,
            layers: (0..LAYERS).map(|_| Matrix::zeros(h, h)).collect(),
            biases: vec![vec![S::zero(); h]; LAYERS],
            out: Matrix::zeros(n_out, h),
            out_bias: vec![S::zero(); n_out],
        }
    }

    pub fn init(dims: LmDims, head: HeadKind, n_out: usize, rng: &mut Rng) -> Self {
        let mut m = Self::zeros(dims, head, n_out);
        let h = m.width();
        let scale = 1.0 / (h as f64).sqrt();
        for w in m.layers.iter_mut() {
            *w = Matrix::random(h, h, scale, rng);
        }
        m.out = Matrix::random(m.out.rows(), h, scale, rng);
        m
    }

    pub fn dims(&self) -> LmDims {
        self.dims
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    pub fn width(&self) -> usize {
        self.dims.embed + self.dims.feature
    }

    pub fn n_out(&self) -> usize {
        self.out_bias.len()
    }

    /// Errors unless the model takes inputs of the embedding and feature
    /// sizes in `dims`.
    pub fn check_dims(&self, dims: &LmDims) -> Result<()> {
        if self.dims.embed != dims.embed || self.dims.feature != dims.feature {
            return Err(Error::DimMismatch(format!(
                "length predictor expects (d_e, d_f) = ({}, {}), models have ({}, {})",
                self.dims.embed, self.dims.feature, dims.embed, dims.feature
            )));
        }
        Ok(())
    }

    fn check_input(&self, e: &[S], f: &[S]) -> Result<()> {
        if e.len() != self.dims.embed || f.len() != self.dims.feature {
            return Err(Error::DimMismatch(format!(
                "input ({}, {}) for a predictor of ({}, {})",
                e.len(),
                f.len(),
                self.dims.embed,
                self.dims.feature
            )));
        }
        Ok(())
    }

    pub(crate) fn forward_cached(&self, e: &[S], f: &[S]) -> Cache<S> {
        let h = self.width();
        let mut x: Vec<S> = Vec::with_capacity(h);
        x.extend_from_slice(e);
        x.extend_from_slice(f);
        let mut xs = Vec::with_capacity(LAYERS + 1);
        let mut acts = Vec::with_capacity(LAYERS);
        for (w, b) in self.layers.iter().zip(&self.biases) {
            let mut a = vec![S::zero(); h];
            w.affine(&x, b, &mut a);
            for v in a.iter_mut() {
                *v = v.tanh();
            }
            let next: Vec<S> = x.iter().zip(&a).map(|(&xi, &ai)| xi + ai).collect();
            xs.push(x);
            acts.push(a);
            x = next;
        }
        let mut out = vec![S::zero(); self.n_out()];
        self.out.affine(&x, &self.out_bias, &mut out);
        xs.push(x);
        Cache { xs, acts, out }
    }

    /// Adds `∂(dout · output)/∂θ` into `grads`.
    pub(crate) fn backward(&self, cache: &Cache<S>, dout: &[S], grads: &mut Self) {
        let h = self.width();
        let last = &cache.xs[LAYERS];
        grads.out.outer_acc(dout, last);
        add_assign(&mut grads.out_bias, dout);
        let mut dx = vec![S::zero(); h];
        self.out.transpose_mul_acc(dout, &mut dx);
        for l in (0..LAYERS).rev() {
            let dz: Vec<S> = dx
                .iter()
                .zip(&cache.acts[l])
                .map(|(&g, &a)| g * (S::one() - a * a))
                .collect();
            grads.layers[l].outer_acc(&dz, &cache.xs[l]);
            add_assign(&mut grads.biases[l], &dz);
            // Residual path carries dx through unchanged.
            self.layers[l].transpose_mul_acc(&dz, &mut dx);
        }
    }

    /// Raw outputs: one scalar for regression, logits for classification.
    pub fn forward(&self, e: &[S], f: &[S]) -> Result<Vec<S>> {
        self.check_input(e, f)?;
        Ok(self.forward_cached(e, f).out)
    }

    /// The unrounded length: the scalar output for regression, the argmax
    /// class for classification.
    pub fn raw(&self, e: &[S], f: &[S]) -> Result<f64> {
        let out = self.forward(e, f)?;
        Ok(match self.head {
            HeadKind::Regression => out[0].as_f64(),
            HeadKind::Classification => argmax(&out) as f64,
        })
    }

    /// `min(k_max, max(0, round(raw)))`.
    pub fn predict_length(&self, e: &[S], f: &[S], k_max: usize) -> Result<usize> {
        let raw = self.raw(e, f)?;
        Ok(clamp_length(raw, k_max))
    }

    /// Training loss of one sample with its gradient added into `grads`:
    /// penalized L1 for regression, cross-entropy for classification.
    pub fn loss_grad(&self, e: &[S], f: &[S], label: usize, lambda: f64, grads: &mut Self) -> f64 {
        let cache = self.forward_cached(e, f);
        match self.head {
            HeadKind::Regression => {
                let raw = cache.out[0].as_f64();
                let slope = penalized_l1_slope(raw, label, lambda);
                self.backward(&cache, &[S::cast(slope)], grads);
                penalized_l1(raw, label, lambda)
            }
            HeadKind::Classification => {
                let label = label.min(self.n_out() - 1);
                let logits: Vec<f64> = cache.out.iter().map(|v| v.as_f64()).collect();
                let p = crate::dist::Dist::softmax(&logits);
                let mut d: Vec<S> = p.probs().iter().map(|&v| S::cast(v)).collect();
                d[label] -= S::one();
                self.backward(&cache, &d, grads);
                -p.probs()[label].max(f64::MIN_POSITIVE).ln()
            }
        }
    }

    pub fn cast<T: Scalar>(&self) -> LdlpModel<T> {
        LdlpModel {
            dims: self.dims,
            head: self.head,
            layers: self.layers.iter().map(Matrix::cast).collect(),
            biases: self
                .biases
                .iter()
                .map(|b| crate::tensor::cast_vec(b))
                .collect(),
            out: self.out.cast(),
            out_bias: crate::tensor::cast_vec(&self.out_bias),
        }
    }
}

pub(crate) fn clamp_length(raw: f64, k_max: usize) -> usize {
    let r = round_half_away(raw);
    if r.is_nan() || r <= 0.0 {
        0
    } else {
        (r.min(k_max as f64)) as usize
    }
}

fn argmax<S: Scalar>(xs: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

impl<S: Scalar> Params<S> for LdlpModel<S> {
    fn tensors(&self) -> Vec<(&'static str, &[S])> {
        const NAMES: [(&str, &str); LAYERS] = [
            ("layer0", "bias0"),
            ("layer1", "bias1"),
            ("layer2", "bias2"),
        ];
        let mut v = Vec::with_capacity(2 * LAYERS + 2);
        for (l, (w, b)) in self.layers.iter().zip(&self.biases).enumerate() {
            v.push((NAMES[l].0, w.data()));
            v.push((NAMES[l].1, b.as_slice()));
        }
        v.push(("out", self.out.data()));
        v.push(("out_bias", &self.out_bias));
        v
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [S])> {
        const NAMES: [(&str, &str); LAYERS] = [
            ("layer0", "bias0"),
            ("layer1", "bias1"),
            ("layer2", "bias2"),
        ];
        let mut v = Vec::with_capacity(2 * LAYERS + 2);
        for (l, (w, b)) in self
            .layers
            .iter_mut()
            .zip(self.biases.iter_mut())
            .enumerate()
        {
            v.push((NAMES[l].0, w.data_mut()));
            v.push((NAMES[l].1, b.as_mut_slice()));
        }
        v.push(("out", self.out.data_mut()));
        v.push(("out_bias", &mut self.out_bias));
        v
    }
}

impl<S: Scalar> Persist for LdlpModel<S> {
    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_header(
            &mut out,
            self.head.model_kind(),
            self.dims,
            &[self.n_out() as u32],
        );
        write_tensors(&mut out, self);
        out
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let h = r.header(|k| match k {
            ModelKind::LdlpRegression | ModelKind::LdlpClassification => 1,
            _ => 0,
        })?;
        let head = match h.kind {
            ModelKind::LdlpRegression => HeadKind::Regression,
            ModelKind::LdlpClassification => HeadKind::Classification,
            other => {
                expect_kind(other, ModelKind::LdlpRegression)?;
                unreachable!()
            }
        };
        let n_out = h.extra[0] as usize;
        if n_out == 0 || (head == HeadKind::Regression && n_out != 1) {
            return Err(Error::Format(format!(
                "bad output count {n_out} for {head:?}"
            )));
        }
        let mut m = LdlpModel::zeros(h.dims, head, n_out);
        r.fill(&mut m)?;
        r.finish()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> LmDims {
        LmDims {
            window: 2,
            embed: 3,
            feature: 4,
            vocab: 5,
        }
    }

    fn input() -> (Vec<f64>, Vec<f64>) {
        (vec![0.3, -0.7, 0.1], vec![0.5, -0.2, 0.9, -0.4])
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = LdlpModel::<f64>::zeros(dims(), HeadKind::Regression, 1);
        let (e, f) = input();
        assert_eq!(m.raw(&e, &f).unwrap(), 0.0);
        assert_eq!(m.raw(&[1.0; 3], &[-1.0; 4]).unwrap(), 0.0);
    }

    #[test]
    fn forward_is_deterministic() {
        let m = LdlpModel::<f64>::init(dims(), HeadKind::Regression, 1, &mut Rng::new(3));
        let (e, f) = input();
        assert_eq!(m.raw(&e, &f).unwrap(), m.raw(&e, &f).unwrap());
    }

    #[test]
    fn rejects_wrong_input_size() {
        let m = LdlpModel::<f64>::zeros(dims(), HeadKind::Regression, 1);
        assert!(matches!(
            m.raw(&[0.0; 2], &[0.0; 4]),
            Err(Error::DimMismatch(_))
        ));
        assert!(m
            .check_dims(&LmDims {
                feature: 5,
                ..dims()
            })
            .is_err());
        assert!(m
            .check_dims(&LmDims {
                vocab: 9,
                window: 7,
                ..dims()
            })
            .is_ok());
    }

    #[test]
    fn rounding_and_clamping() {
        assert_eq!(clamp_length(3.4, 8), 3);
        assert_eq!(clamp_length(7.6, 6), 6);
        assert_eq!(clamp_length(-0.4, 8), 0);
        assert_eq!(clamp_length(2.5, 8), 3);
        assert_eq!(clamp_length(f64::NAN, 8), 0);
        assert_eq!(round_half_away(-2.5), -3.0);
        assert_eq!(round_half_away(-2.4), -2.0);
    }

    #[test]
    fn penalized_l1_examples() {
        assert_eq!(penalized_l1(3.0, 5, 2.0), 4.0);
        assert_eq!(penalized_l1(5.0, 3, 2.0), 2.0);
        assert_eq!(penalized_l1(4.0, 4, 7.0), 0.0);
        assert_eq!(penalized_l1(3.0, 5, 1.0), 2.0);
    }

    #[test]
    fn persist_round_trip() {
        for (head, n) in [(HeadKind::Regression, 1), (HeadKind::Classification, 9)] {
            let m = LdlpModel::<f64>::init(dims(), head, n, &mut Rng::new(4));
            let back = LdlpModel::<f64>::from_bytes(&m.to_bytes()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.n_out(), n);
        }
        let target = crate::lm::TargetLm::<f64>::zeros(dims());
        assert!(LdlpModel::<f64>::from_bytes(&target.to_bytes()).is_err());
    }

    #[test]
    fn classification_predicts_argmax_class() {
        let mut m = LdlpModel::<f64>::zeros(dims(), HeadKind::Classification, 6);
        m.out_bias[4] = 1.0;
        let (e, f) = input();
        assert_eq!(m.predict_length(&e, &f, 8).unwrap(), 4);
        assert_eq!(m.predict_length(&e, &f, 3).unwrap(), 3);
    }
}
