use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::basis::BasisConfig;
use super::distribution::{symmetrize, WeightDistribution};
use super::trajectory::Trajectory;
use crate::error::{PptError, Result};

/// Ridge used by [`fit_prior`] callers that have no better choice.
pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Ridge-regularized least-squares weights of a single demonstration,
/// vectorized dimension-major.
pub fn fit_weights(basis: &BasisConfig, demo: &Trajectory, ridge: f64) -> Result<DVector<f64>> {
    let k = basis.num_basis();
    let d = basis.dims();
    if demo.dims() != d {
        return Err(PptError::DimensionMismatch {
            expected: d,
            got: demo.dims(),
        });
    }
    if demo.len() < k {
        return Err(PptError::IllPosedFit(format!(
            "demonstration has {} samples but the basis has {k} functions",
            demo.len()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(PptError::InvalidInput(format!("ridge must be >= 0, got {ridge}")));
    }
    let n = demo.len();
    let mut design = DMatrix::zeros(n, k);
    for (i, &phase) in demo.phases().iter().enumerate() {
        let phi = basis.basis_vector(phase)?;
        design.row_mut(i).copy_from(&phi.transpose());
    }
    let mut gram = design.transpose() * &design;
    for i in 0..k {
        gram[(i, i)] += ridge;
    }
    let chol = gram.cholesky().ok_or_else(|| {
        PptError::IllPosedFit("basis Gram matrix is singular; increase the ridge".into())
    })?;
    let mut weights = DVector::zeros(k * d);
    for dim in 0..d {
        let y = DVector::from_vec(demo.dimension(dim));
        let rhs = design.transpose() * y;
        let w = chol.solve(&rhs);
        weights.rows_mut(dim * k, k).copy_from(&w);
    }
    Ok(weights)
}

/// Gaussian prior over weights from one or more demonstrations.
///
/// The covariance is the unbiased sample covariance; `ridge·I` is added when
/// there are fewer than two demonstrations or the sample covariance is rank
/// deficient.
pub fn fit_prior(basis: &BasisConfig, demos: &[Trajectory], ridge: f64) -> Result<WeightDistribution> {
    if demos.is_empty() {
        return Err(PptError::IllPosedFit("no demonstrations".into()));
    }
    let all: Vec<DVector<f64>> = demos
        .iter()
        .map(|d| fit_weights(basis, d, ridge))
        .collect::<Result<_>>()?;
    let n = basis.weight_len();
    let count = all.len() as f64;
    let mean = all.iter().fold(DVector::zeros(n), |acc, w| acc + w) / count;
    let mut cov = DMatrix::zeros(n, n);
    if all.len() >= 2 {
        for w in &all {
            let c = w - &mean;
            cov += &c * c.transpose();
        }
        cov /= count - 1.0;
        cov = symmetrize(cov);
    }
    if all.len() < 2 || rank_deficient(&cov) {
        for i in 0..n {
            cov[(i, i)] += ridge;
        }
    }
    WeightDistribution::new(mean, cov)
}

fn rank_deficient(cov: &DMatrix<f64>) -> bool {
    let eig = SymmetricEigen::new(cov.clone()).eigenvalues;
    let max = eig.amax();
    if max == 0.0 {
        return true;
    }
    let tol = max * cov.nrows() as f64 * f64::EPSILON * 16.0;
    eig.iter().any(|&l| l <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_from_weights(basis: &BasisConfig, w: &[f64], n: usize) -> Trajectory {
        Trajectory::from_fn(n, |p| basis.decode(w, p).unwrap().iter().copied().collect()).unwrap()
    }

    #[test]
    fn recovers_generating_weights() {
        let basis = BasisConfig::uniform(6, 2).unwrap();
        let w: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.1).collect();
        let demo = demo_from_weights(&basis, &w, 101);
        let dist = fit_prior(&basis, &[demo.clone()], 1e-14).unwrap();
        for (a, b) in dist.mean().iter().zip(&w) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        // Decoding the fitted mean reproduces the held samples.
        let mean: Vec<f64> = dist.mean().iter().copied().collect();
        for (phase, point) in demo.phases().iter().zip(demo.points()) {
            let y = basis.decode(&mean, *phase).unwrap();
            for (a, b) in y.iter().zip(point) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn identical_demos_give_ridge_covariance() {
        let basis = BasisConfig::uniform(4, 1).unwrap();
        let demo = Trajectory::from_fn(30, |p| vec![(3.0 * p).sin()]).unwrap();
        let ridge = 1e-4;
        let dist = fit_prior(&basis, &[demo.clone(), demo.clone(), demo], ridge).unwrap();
        let expected = DMatrix::<f64>::identity(4, 4) * ridge;
        assert!((dist.cov() - expected).amax() < 1e-15);
    }

    #[test]
    fn mirrored_demos_decode_to_constant() {
        let basis = BasisConfig::uniform(5, 1).unwrap();
        let c = 0.25;
        let a = Trajectory::from_fn(40, |p| vec![c + 0.1 * (6.0 * p).sin()]).unwrap();
        let b = Trajectory::from_fn(40, |p| vec![c - 0.1 * (6.0 * p).sin()]).unwrap();
        let dist = fit_prior(&basis, &[a, b], 1e-12).unwrap();
        let mean: Vec<f64> = dist.mean().iter().copied().collect();
        for i in 0..=10 {
            let y = basis.decode(&mean, i as f64 / 10.0).unwrap();
            assert!((y[0] - c).abs() < 1e-10);
        }
    }

    #[test]
    fn too_few_samples_is_ill_posed() {
        let basis = BasisConfig::uniform(8, 1).unwrap();
        let demo = Trajectory::from_fn(5, |p| vec![p]).unwrap();
        assert!(matches!(
            fit_prior(&basis, &[demo], 1e-6),
            Err(PptError::IllPosedFit(_))
        ));
        assert!(matches!(fit_prior(&basis, &[], 1e-6), Err(PptError::IllPosedFit(_))));
    }
}
