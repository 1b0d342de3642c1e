//! Probabilistic movement primitives.
//!
//! A trajectory is `y(φ) = Φ(φ)ᵀ w` with `w ~ N(μ_w, Σ_w)` over normalized
//! Gaussian RBFs. Priors are fit from demonstrations by ridge regression and
//! conditioned on via-points to obtain a posterior over weights.

mod basis;
mod condition;
mod distribution;
mod fit;
mod trajectory;

pub use basis::{BasisConfig, DEFAULT_WIDTH_FACTOR};
pub use condition::{condition, stack_observations};
pub use distribution::{add_jitter, cholesky_with_jitter, symmetrize, WeightDistribution, JITTER_SCALE};
pub use fit::{fit_prior, fit_weights, DEFAULT_RIDGE};
pub use trajectory::{Trajectory, ViaPoint, ViaPointSet, DEFAULT_VIA_NOISE};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PptError, Result};

/// A basis together with a weight distribution; the unit that is saved and
/// loaded as structured text.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveModel {
    pub basis: BasisConfig,
    pub dist: WeightDistribution,
}

/// On-disk JSON layout of a [`PrimitiveModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrimitiveRecord {
    #[serde(rename = "K")]
    pub num_basis: usize,
    pub d: usize,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    #[serde(default = "default_true")]
    pub normalize: bool,
    pub mean: Vec<f64>,
    pub cov_row_major: Vec<f64>,
}

fn default_true() -> bool {
    true
}

impl PrimitiveModel {
    pub fn new(basis: BasisConfig, dist: WeightDistribution) -> Result<Self> {
        if dist.len() != basis.weight_len() {
            return Err(PptError::DimensionMismatch {
                expected: basis.weight_len(),
                got: dist.len(),
            });
        }
        Ok(Self { basis, dist })
    }

    pub fn mean_weights(&self) -> Vec<f64> {
        self.dist.mean().iter().copied().collect()
    }

    pub fn to_record(&self) -> PrimitiveRecord {
        let n = self.dist.len();
        let cov = self.dist.cov();
        PrimitiveRecord {
            num_basis: self.basis.num_basis(),
            d: self.basis.dims(),
            centers: self.basis.centers().to_vec(),
            widths: self.basis.widths().to_vec(),
            normalize: self.basis.normalize(),
            mean: self.mean_weights(),
            cov_row_major: (0..n * n).map(|i| cov[(i / n, i % n)]).collect(),
        }
    }

    pub fn from_record(rec: PrimitiveRecord) -> Result<Self> {
        let basis = BasisConfig::new(rec.num_basis, rec.d, rec.centers, rec.widths, rec.normalize)?;
        let n = basis.weight_len();
        if rec.mean.len() != n || rec.cov_row_major.len() != n * n {
            return Err(PptError::DimensionMismatch {
                expected: n,
                got: rec.mean.len(),
            });
        }
        let dist = WeightDistribution::new(
            DVector::from_vec(rec.mean),
            DMatrix::from_row_slice(n, n, &rec.cov_row_major),
        )?;
        Self::new(basis, dist)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_record(serde_json::from_str(text)?)
    }

    /// Posterior model given via-points.
    pub fn condition(&self, vias: &ViaPointSet) -> Result<Self> {
        Ok(Self {
            basis: self.basis.clone(),
            dist: condition(&self.dist, &self.basis, vias)?,
        })
    }

    /// Mean trajectory with per-point covariances on a uniform grid.
    pub fn mean_trajectory(&self, samples: usize) -> Result<Trajectory> {
        let phases = Trajectory::uniform_phases(samples);
        let d = self.basis.dims();
        let mut points = Vec::with_capacity(phases.len());
        let mut covs = Vec::with_capacity(phases.len());
        for &p in &phases {
            let (m, c) = self.dist.decode(&self.basis, p)?;
            points.push(m.iter().copied().collect());
            covs.push((0..d * d).map(|i| c[(i / d, i % d)]).collect());
        }
        Trajectory::new(phases, points)?.with_covariances(covs)
    }
}
