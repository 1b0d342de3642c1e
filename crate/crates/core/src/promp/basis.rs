use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PptError, Result};

/// Width factor applied to the center spacing when building uniform bases.
pub const DEFAULT_WIDTH_FACTOR: f64 = 0.7;

/// Gaussian radial basis over the phase interval `[0, 1]`, replicated for each
/// task-space dimension.
///
/// Weights are vectorized dimension-major: the `K` weights of dimension 0 come
/// first, then the `K` weights of dimension 1, and so on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    num_basis: usize,
    dims: usize,
    centers: Vec<f64>,
    widths: Vec<f64>,
    normalize: bool,
}

impl BasisConfig {
    pub fn new(
        num_basis: usize,
        dims: usize,
        centers: Vec<f64>,
        widths: Vec<f64>,
        normalize: bool,
    ) -> Result<Self> {
        if num_basis < 2 {
            return Err(PptError::InvalidInput(format!(
                "need at least 2 basis functions, got {num_basis}"
            )));
        }
        if dims < 1 {
            return Err(PptError::InvalidInput("dimensionality must be >= 1".into()));
        }
        if centers.len() != num_basis || widths.len() != num_basis {
            return Err(PptError::DimensionMismatch {
                expected: num_basis,
                got: centers.len().min(widths.len()),
            });
        }
        if centers.iter().any(|c| !c.is_finite() || *c < 0.0 || *c > 1.0) {
            return Err(PptError::InvalidInput("centers must lie in [0, 1]".into()));
        }
        if centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PptError::InvalidInput(
                "centers must be strictly increasing".into(),
            ));
        }
        if widths.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(PptError::InvalidInput("widths must be positive".into()));
        }
        Ok(Self {
            num_basis,
            dims,
            centers,
            widths,
            normalize,
        })
    }

    /// Uniformly spaced centers on `[0, 1]` (endpoints included), widths equal to
    /// `width_factor` times the spacing.
    pub fn uniform_with(
        num_basis: usize,
        dims: usize,
        width_factor: f64,
        normalize: bool,
    ) -> Result<Self> {
        if num_basis < 2 {
            return Err(PptError::InvalidInput(format!(
                "need at least 2 basis functions, got {num_basis}"
            )));
        }
        let spacing = 1.0 / (num_basis - 1) as f64;
        let centers = (0..num_basis).map(|k| k as f64 * spacing).collect();
        let widths = vec![width_factor * spacing; num_basis];
        Self::new(num_basis, dims, centers, widths, normalize)
    }

    /// Normalized uniform basis with the default width factor.
    pub fn uniform(num_basis: usize, dims: usize) -> Result<Self> {
        Self::uniform_with(num_basis, dims, DEFAULT_WIDTH_FACTOR, true)
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn normalize(&self) -> bool {
        self.normalize
    }

    /// Length of the vectorized weight vector, `K * d`.
    pub fn weight_len(&self) -> usize {
        self.num_basis * self.dims
    }

    /// RBF activations at `phase`, divided by their sum when normalization is on.
    pub fn basis_vector(&self, phase: f64) -> Result<DVector<f64>> {
        check_phase(phase)?;
        let mut phi = DVector::from_iterator(
            self.num_basis,
            self.centers.iter().zip(&self.widths).map(|(c, s)| {
                let z = phase - c;
                (-(z * z) / (2.0 * s * s)).exp()
            }),
        );
        if self.normalize {
            let total = phi.sum();
            if !(total > 0.0) {
                return Err(PptError::NumericalConditioning(format!(
                    "basis activations vanish at phase {phase}"
                )));
            }
            phi /= total;
        }
        Ok(phi)
    }

    /// The `d × (K·d)` block-diagonal observation matrix whose row `i` holds
    /// `Φ(φ)ᵀ` in the columns of dimension `i`.
    pub fn observation_matrix(&self, phase: f64) -> Result<DMatrix<f64>> {
        let phi = self.basis_vector(phase)?;
        let mut h = DMatrix::zeros(self.dims, self.weight_len());
        for i in 0..self.dims {
            for k in 0..self.num_basis {
                h[(i, i * self.num_basis + k)] = phi[k];
            }
        }
        Ok(h)
    }

    /// Decode a weight vector into the `d`-dimensional point at `phase`.
    pub fn decode(&self, weights: &[f64], phase: f64) -> Result<DVector<f64>> {
        if weights.len() != self.weight_len() {
            return Err(PptError::DimensionMismatch {
                expected: self.weight_len(),
                got: weights.len(),
            });
        }
        let phi = self.basis_vector(phase)?;
        Ok(DVector::from_iterator(
            self.dims,
            weights
                .chunks_exact(self.num_basis)
                .map(|w| w.iter().zip(phi.iter()).map(|(a, b)| a * b).sum::<f64>()),
        ))
    }

    /// Decode every phase of a grid into a trajectory point list.
    pub fn decode_path(&self, weights: &[f64], phases: &[f64]) -> Result<Vec<Vec<f64>>> {
        phases
            .iter()
            .map(|&p| self.decode(weights, p).map(|v| v.iter().copied().collect()))
            .collect()
    }
}

pub(crate) fn check_phase(phase: f64) -> Result<()> {
    if !phase.is_finite() {
        return Err(PptError::InvalidInput(format!("non-finite phase {phase}")));
    }
    if !(-1e-12..=1.0 + 1e-12).contains(&phase) {
        return Err(PptError::InvalidInput(format!(
            "phase {phase} outside [0, 1]"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unnormalized_peak_is_one_at_center() {
        let cfg = BasisConfig::uniform_with(5, 1, 0.7, false).unwrap();
        for (k, &c) in cfg.centers().iter().enumerate() {
            let phi = cfg.basis_vector(c).unwrap();
            assert_eq!(phi[k], 1.0);
        }
    }

    #[test]
    fn normalized_sums_to_one() {
        let cfg = BasisConfig::uniform(9, 2).unwrap();
        for i in 0..=200 {
            let phi = cfg.basis_vector(i as f64 / 200.0).unwrap();
            assert!((phi.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let cfg = BasisConfig::new(2, 1, vec![0.25, 0.75], vec![0.2, 0.2], true).unwrap();
        let phi = cfg.basis_vector(0.5).unwrap();
        assert!((phi[0] - 0.5).abs() < 1e-15);
        assert!((phi[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_phase_and_config() {
        let cfg = BasisConfig::uniform(4, 1).unwrap();
        assert!(matches!(
            cfg.basis_vector(f64::NAN),
            Err(PptError::InvalidInput(_))
        ));
        assert!(cfg.basis_vector(1.5).is_err());
        assert!(BasisConfig::new(2, 1, vec![0.5, 0.5], vec![0.1, 0.1], true).is_err());
        assert!(BasisConfig::new(2, 1, vec![0.0, 1.0], vec![0.1, 0.0], true).is_err());
        assert!(BasisConfig::new(1, 1, vec![0.0], vec![0.1], true).is_err());
        assert!(BasisConfig::new(2, 1, vec![0.0, 1.2], vec![0.1, 0.1], true).is_err());
    }

    #[test]
    fn decode_constant_and_zero() {
        let cfg = BasisConfig::uniform(6, 3).unwrap();
        let w = vec![0.37; cfg.weight_len()];
        for i in 0..=20 {
            let y = cfg.decode(&w, i as f64 / 20.0).unwrap();
            for v in y.iter() {
                assert!((v - 0.37).abs() < 1e-14);
            }
        }
        let y = cfg.decode(&vec![0.0; cfg.weight_len()], 0.3).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
        assert!(matches!(
            cfg.decode(&[1.0, 2.0], 0.3),
            Err(PptError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn observation_matrix_matches_decode() {
        let cfg = BasisConfig::uniform(4, 2).unwrap();
        let w: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let h = cfg.observation_matrix(0.42).unwrap();
        let y = &h * DVector::from_column_slice(&w);
        let y2 = cfg.decode(&w, 0.42).unwrap();
        assert!((y - y2).norm() < 1e-14);
    }
}
