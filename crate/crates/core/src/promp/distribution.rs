use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::basis::BasisConfig;
use crate::error::{PptError, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;
/// Relative jitter, scaled by `trace(Σ)/n`, added before factorizations.
pub const JITTER_SCALE: f64 = 1e-9;

/// Gaussian over vectorized primitive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDistribution {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl WeightDistribution {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(PptError::DimensionMismatch {
                expected: n,
                got: cov.nrows(),
            });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(PptError::InvalidInput("non-finite distribution entry".into()));
        }
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > SYMMETRY_TOL * scale {
            return Err(PptError::InvalidInput("covariance is not symmetric".into()));
        }
        let min_eig = SymmetricEigen::new(cov.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if n > 0 && min_eig < -PSD_TOL * scale {
            return Err(PptError::InvalidInput(format!(
                "covariance is not positive semi-definite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self { mean, cov })
    }

    /// Isotropic distribution `N(mean, variance·I)`.
    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, DMatrix::identity(n, n) * variance)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Mean and covariance of the trajectory point at `phase`.
    pub fn decode(&self, basis: &BasisConfig, phase: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if self.len() != basis.weight_len() {
            return Err(PptError::DimensionMismatch {
                expected: basis.weight_len(),
                got: self.len(),
            });
        }
        let h = basis.observation_matrix(phase)?;
        let mean = &h * &self.mean;
        let cov = &h * &self.cov * h.transpose();
        Ok((mean, symmetrize(cov)))
    }

    /// Draw one weight vector through a symmetric factorization of the covariance.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let factor = self.sqrt_factor()?;
        let z = DVector::from_iterator(self.len(), (0..self.len()).map(|_| rng.sample(StandardNormal)));
        Ok(&self.mean + factor * z)
    }

    /// `Q·sqrt(Λ)` from the eigendecomposition of the covariance, so that
    /// `F·Fᵀ = Σ`. A zero covariance yields a zero factor.
    pub fn sqrt_factor(&self) -> Result<DMatrix<f64>> {
        let n = self.len();
        if self.cov.iter().all(|v| *v == 0.0) {
            return Ok(DMatrix::zeros(n, n));
        }
        let eig = SymmetricEigen::new(symmetrize(self.cov.clone()));
        let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        let mut factor = eig.eigenvectors;
        for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
            if !lambda.is_finite() || lambda < -PSD_TOL * scale.max(1.0) {
                return Err(PptError::NumericalConditioning(format!(
                    "covariance factorization failed (eigenvalue {lambda:e})"
                )));
            }
            let s = lambda.max(0.0).sqrt();
            factor.column_mut(j).scale_mut(s);
        }
        Ok(factor)
    }
}

/// `(A + Aᵀ)/2`.
pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Cholesky factor of the symmetrized matrix, retried once with
/// [`add_jitter`] when the plain factorization fails.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    symmetrize(m.clone()).cholesky().or_else(|| add_jitter(m).cholesky())
}

/// Adds `JITTER_SCALE · trace(Σ)/n` to the diagonal.
pub fn add_jitter(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    let jitter = JITTER_SCALE * m.trace().abs() / n as f64;
    let mut out = symmetrize(m.clone());
    for i in 0..n {
        out[(i, i)] += jitter;
    }
    out
}
