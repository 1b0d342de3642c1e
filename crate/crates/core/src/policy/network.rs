//! ReLU multilayer perceptron over a flat parameter slice.
//!
//! Layer `l` stores its weight matrix column-major (`out × in`) followed by its bias.

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PptError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    len: usize,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input, `acts[l]` the post-activation of layer `l`.
    pub acts: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.acts.last().expect("cache holds the input at least")
    }
}

impl MlpLayout {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(PptError::InvalidInput(format!("bad layer sizes {sizes:?}")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() - 1);
        let mut len = 0;
        for w in sizes.windows(2) {
            offsets.push(len);
            len += w[0] * w[1] + w[1];
        }
        Ok(Self { sizes, offsets, len })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Number of scalar parameters.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn dims(&self, l: usize) -> (usize, usize) {
        (self.sizes[l], self.sizes[l + 1])
    }

    pub fn weight<'a>(&self, theta: &'a [f64], l: usize) -> DMatrixView<'a, f64> {
        let (i, o) = self.dims(l);
        let off = self.offsets[l];
        DMatrixView::from_slice(&theta[off..off + i * o], o, i)
    }

    pub fn bias<'a>(&self, theta: &'a [f64], l: usize) -> DVectorView<'a, f64> {
        let (i, o) = self.dims(l);
        let off = self.offsets[l] + i * o;
        DVectorView::from_slice(&theta[off..off + o], o)
    }

    /// He-normal weights and zero biases; the last layer is scaled by `out_scale`.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, out_scale: f64) -> Vec<f64> {
        let mut theta = vec![0.0; self.len];
        for l in 0..self.num_layers() {
            let (i, o) = self.dims(l);
            let mut std = (2.0 / i as f64).sqrt();
            if l + 1 == self.num_layers() {
                std *= out_scale;
            }
            let normal = Normal::new(0.0, std).expect("finite std");
            let off = self.offsets[l];
            for v in &mut theta[off..off + i * o] {
                *v = normal.sample(rng);
            }
        }
        theta
    }

    /// Batched forward pass; `x` holds one sample per column.
    pub fn forward(&self, theta: &[f64], x: &DMatrix<f64>) -> Result<ForwardCache> {
        if theta.len() != self.len {
            return Err(PptError::DimensionMismatch { expected: self.len, got: theta.len() });
        }
        if x.nrows() != self.input_dim() {
            return Err(PptError::DimensionMismatch { expected: self.input_dim(), got: x.nrows() });
        }
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.clone());
        for l in 0..self.num_layers() {
            let mut z = self.weight(theta, l) * acts.last().unwrap();
            let b = self.bias(theta, l);
            for mut col in z.column_iter_mut() {
                col += &b;
            }
            if l + 1 < self.num_layers() {
                z.apply(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        Ok(ForwardCache { acts })
    }

    pub fn forward_one(&self, theta: &[f64], x: &[f64]) -> Result<DVector<f64>> {
        let m = DMatrix::from_column_slice(x.len(), 1, x);
        Ok(self.forward(theta, &m)?.output().column(0).into_owned())
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂output`.
    pub fn backward(
        &self,
        theta: &[f64],
        cache: &ForwardCache,
        d_out: &DMatrix<f64>,
        grad: &mut [f64],
    ) {
        let mut delta = d_out.clone();
        for l in (0..self.num_layers()).rev() {
            let (i, o) = self.dims(l);
            let off = self.offsets[l];
            let input = &cache.acts[l];
            let dw = &delta * input.transpose();
            for (g, v) in grad[off..off + i * o].iter_mut().zip(dw.iter()) {
                *g += v;
            }
            for (r, g) in grad[off + i * o..off + i * o + o].iter_mut().enumerate() {
                *g += delta.row(r).sum();
            }
            if l > 0 {
                let mut prev = self.weight(theta, l).transpose() * &delta;
                prev.zip_apply(input, |d, a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_counts_parameters() {
        let l = MlpLayout::new(vec![3, 4, 2]).unwrap();
        assert_eq!(l.len(), 3 * 4 + 4 + 4 * 2 + 2);
        assert!(MlpLayout::new(vec![3]).is_err());
        assert!(MlpLayout::new(vec![3, 0, 1]).is_err());
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let l = MlpLayout::new(vec![3, 5, 2]).unwrap();
        let out = l.forward_one(&vec![0.0; l.len()], &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(out, DVector::zeros(2));
    }

    #[test]
    fn hand_computed_single_hidden_unit() {
        // x ∈ R², one hidden ReLU unit, scalar output.
        let l = MlpLayout::new(vec![2, 1, 1]).unwrap();
        // W1 = [0.5, -1.0], b1 = 0.25, W2 = [2.0], b2 = -0.5
        let theta = [0.5, -1.0, 0.25, 2.0, -0.5];
        let y = l.forward_one(&theta, &[2.0, 0.5]).unwrap()[0];
        let h = (0.5f64 * 2.0 - 1.0 * 0.5 + 0.25).max(0.0);
        assert_eq!(y, 2.0 * h - 0.5);
        let y_off = l.forward_one(&theta, &[-2.0, 0.5]).unwrap()[0];
        assert_eq!(y_off, -0.5);
    }

    #[test]
    fn forward_is_deterministic_and_checks_width() {
        let l = MlpLayout::new(vec![3, 8, 8, 2]).unwrap();
        let theta = l.init(&mut ChaCha8Rng::seed_from_u64(1), 1.0);
        let x = [0.3, -0.1, 0.7];
        assert_eq!(l.forward_one(&theta, &x).unwrap(), l.forward_one(&theta, &x).unwrap());
        assert!(l.forward_one(&theta, &[1.0]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let l = MlpLayout::new(vec![3, 6, 5, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let theta = l.init(&mut rng, 1.0);
        let x = DMatrix::from_fn(3, 4, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin());
        let c = DMatrix::from_fn(2, 4, |i, j| (i + 2 * j) as f64 * 0.1 - 0.3);
        // L = Σ c ⊙ y
        let loss = |t: &[f64]| l.forward(t, &x).unwrap().output().component_mul(&c).sum();
        let cache = l.forward(&theta, &x).unwrap();
        let mut g = vec![0.0; l.len()];
        l.backward(&theta, &cache, &c, &mut g);
        let h = 1e-6;
        for k in 0..l.len() {
            let mut tp = theta.clone();
            tp[k] += h;
            let mut tm = theta.clone();
            tm[k] -= h;
            let fd = (loss(&tp) - loss(&tm)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", g[k]);
        }
    }
}
