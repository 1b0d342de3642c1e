use nalgebra::{DMatrix, DVector};

use super::basis::BasisConfig;
use super::distribution::{cholesky_with_jitter, symmetrize, WeightDistribution};
use super::trajectory::ViaPointSet;
use crate::error::{PptError, Result};

/// Stacked observation matrix `H` (one `Φ(φ_j)ᵀ` block per via-point), stacked
/// targets `y_D` and block-diagonal noise `Σ_D`.
pub fn stack_observations(
    basis: &BasisConfig,
    vias: &ViaPointSet,
) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let d = basis.dims();
    let m = vias.len();
    let n = basis.weight_len();
    let mut h = DMatrix::zeros(m * d, n);
    let mut y = DVector::zeros(m * d);
    let mut noise = DMatrix::zeros(m * d, m * d);
    for (j, via) in vias.points().iter().enumerate() {
        if via.target.len() != d {
            return Err(PptError::DimensionMismatch {
                expected: d,
                got: via.target.len(),
            });
        }
        h.view_mut((j * d, 0), (d, n))
            .copy_from(&basis.observation_matrix(via.phase)?);
        y.rows_mut(j * d, d).copy_from(&via.target);
        noise.view_mut((j * d, j * d), (d, d)).copy_from(&via.cov);
    }
    Ok((h, y, noise))
}

/// Gaussian posterior over weights given via-point observations
/// `y_j = Φ(φ_j)ᵀ w + noise_j`.
///
/// The information form `Σ⁺ = (Σ⁻¹ + HᵀΣ_D⁻¹H)⁻¹`, `μ⁺ = Σ⁺(Σ⁻¹μ + HᵀΣ_D⁻¹y_D)`
/// is evaluated through its Woodbury equivalent
/// `Σ⁺ = Σ − ΣHᵀS⁻¹HΣ`, `μ⁺ = μ + ΣHᵀS⁻¹(y_D − Hμ)` with `S = HΣHᵀ + Σ_D`,
/// so the only solve is a Cholesky solve on the small matrix `S`. Jitter is
/// added only when a factorization fails; the prior is factorized to reject
/// singular priors.
pub fn condition(
    dist: &WeightDistribution,
    basis: &BasisConfig,
    vias: &ViaPointSet,
) -> Result<WeightDistribution> {
    if dist.len() != basis.weight_len() {
        return Err(PptError::DimensionMismatch {
            expected: basis.weight_len(),
            got: dist.len(),
        });
    }
    if vias.is_empty() {
        return Ok(dist.clone());
    }
    let (h, y, noise) = stack_observations(basis, vias)?;
    let sigma = dist.cov();
    if cholesky_with_jitter(sigma).is_none() {
        return Err(PptError::NumericalConditioning("prior covariance is singular after jitter".into()));
    }
    let sigma_ht = sigma * h.transpose();
    let s = symmetrize(&h * &sigma_ht + noise);
    let s_chol = cholesky_with_jitter(&s).ok_or_else(|| {
        PptError::NumericalConditioning("innovation covariance is not positive definite".into())
    })?;
    let innovation = y - &h * dist.mean();
    let mean = dist.mean() + &sigma_ht * s_chol.solve(&innovation);
    let cov = symmetrize(sigma - &sigma_ht * s_chol.solve(&sigma_ht.transpose()));
    WeightDistribution::new(mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promp::ViaPoint;

    #[test]
    fn empty_evidence_is_identity() {
        let basis = BasisConfig::uniform(4, 1).unwrap();
        let dist = WeightDistribution::isotropic(DVector::from_element(4, 0.3), 0.1).unwrap();
        let post = condition(&dist, &basis, &ViaPointSet::new()).unwrap();
        assert_eq!(post, dist);
    }

    #[test]
    fn tight_via_point_is_interpolated() {
        let basis = BasisConfig::uniform(7, 2).unwrap();
        let dist = WeightDistribution::isotropic(DVector::zeros(14), 0.05).unwrap();
        let vias = ViaPointSet::from_points(vec![ViaPoint::isotropic(0.4, &[0.3, -0.2], 1e-10).unwrap()])
            .unwrap();
        let post = condition(&dist, &basis, &vias).unwrap();
        let mean: Vec<f64> = post.mean().iter().copied().collect();
        let y = basis.decode(&mean, 0.4).unwrap();
        assert!((y[0] - 0.3).abs() < 1e-4);
        assert!((y[1] + 0.2).abs() < 1e-4);
    }

    #[test]
    fn singular_prior_is_reported() {
        let basis = BasisConfig::uniform(3, 1).unwrap();
        let dist = WeightDistribution::new(DVector::zeros(3), DMatrix::zeros(3, 3)).unwrap();
        let vias = ViaPointSet::from_points(vec![ViaPoint::isotropic(0.5, &[1.0], 1e-6).unwrap()]).unwrap();
        assert!(matches!(
            condition(&dist, &basis, &vias),
            Err(PptError::NumericalConditioning(_))
        ));
    }
}
