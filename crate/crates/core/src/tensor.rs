//! Dense row-major matrices and the parameter-visiting trait used by the
//! trainers, the gradient checks and the model container.

use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    /// Entries drawn uniformly from `[-scale, scale)`.
    pub fn random(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| S::cast(rng.uniform(-scale, scale)))
            .collect();
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = self · x + bias`.
    pub fn affine(&self, x: &[S], bias: &[S], out: &mut [S]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = bias[r] + dot(self.row(r), x);
        }
    }

    /// `out += selfᵀ · y`.
    pub fn transpose_mul_acc(&self, y: &[S], out: &mut [S]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr == S::zero() {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
    }

    /// `self += a ⊗ b`.
    pub fn outer_acc(&mut self, a: &[S], b: &[S]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        let cols = self.cols;
        for (r, &ar) in a.iter().enumerate() {
            if ar == S::zero() {
                continue;
            }
            for (w, &bc) in self.data[r * cols..(r + 1) * cols].iter_mut().zip(b) {
                *w += ar * bc;
            }
        }
    }

    pub fn cast<T: Scalar>(&self) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| T::cast(v.as_f64())).collect(),
        }
    }
}

#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `y += x`.
#[inline]
pub fn add_assign<S: Scalar>(y: &mut [S], x: &[S]) {
    for (a, &b) in y.iter_mut().zip(x) {
        *a += b;
    }
}

pub fn cast_vec<S: Scalar, T: Scalar>(v: &[S]) -> Vec<T> {
    v.iter().map(|x| T::cast(x.as_f64())).collect()
}

/// Named access to every trainable tensor of a model, in a fixed order.
///
/// The order defines both the on-disk layout and the update order of the
/// trainers, so it must never change for an existing model kind.
pub trait Params<S: Scalar> {
    fn tensors(&self) -> Vec<(&'static str, &[S])>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [S])>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self -= lr * grads`.
    fn sgd_step(&mut self, grads: &Self, lr: S) {
        for ((_, w), (_, g)) in self.tensors_mut().into_iter().zip(grads.tensors()) {
            for (wi, &gi) in w.iter_mut().zip(g) {
                *wi -= lr * gi;
            }
        }
    }

    fn scale(&mut self, factor: S) {
        for (_, w) in self.tensors_mut() {
            for wi in w.iter_mut() {
                *wi *= factor;
            }
        }
    }

    fn fill_zero(&mut self) {
        for (_, w) in self.tensors_mut() {
            w.fill(S::zero());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_and_transpose() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut out = [0.0; 2];
        m.affine(&[1.0, 0.0, -1.0], &[0.5, -0.5], &mut out);
        assert_eq!(out, [-1.5, -2.5]);
        let mut back = [0.0; 3];
        m.transpose_mul_acc(&[1.0, 1.0], &mut back);
        assert_eq!(back, [5.0, 7.0, 9.0]);
    }

    #[test]
    fn outer_accumulates() {
        let mut m = Matrix::<f64>::zeros(2, 2);
        m.outer_acc(&[1.0, 2.0], &[3.0, 4.0]);
        m.outer_acc(&[1.0, 0.0], &[1.0, 1.0]);
        assert_eq!(m.data(), &[4.0, 5.0, 6.0, 8.0]);
    }
}
