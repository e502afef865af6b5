use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::RiskRegion;
use crate::distributions::{mahalanobis_with, EllipticalDist};
use crate::error::{check_dim, check_probability_open, Error, Result};

/// Exact risk region for unconstrained portfolios: the complement of the
/// ellipsoid `{y : (y − μ)ᵀ Σ⁻¹ (y − μ) ≤ α²}` with `α = F_{X₁}⁻¹(β)`.
#[derive(Debug, Clone)]
pub struct EllipsoidRegion {
    mu: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: f64,
    beta: f64,
}

impl EllipsoidRegion {
    /// Fails if `sigma` is not symmetric positive definite.
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, alpha: f64, beta: f64) -> Result<Self> {
        check_probability_open(beta, "beta")?;
        check_dim(mu.len(), sigma.nrows())?;
        check_dim(mu.len(), sigma.ncols())?;
        if (&sigma - sigma.transpose()).amax() > 1e-10 * sigma.amax().max(1.0) {
            return Err(Error::Singular("Sigma is not symmetric".into()));
        }
        let chol = Cholesky::new(sigma).ok_or_else(|| Error::Singular("Sigma is not positive definite".into()))?;
        Ok(Self { mu, chol, alpha, beta })
    }

    pub fn from_dist(dist: &EllipticalDist, beta: f64) -> Result<Self> {
        let alpha = dist.marginal_quantile(beta)?;
        Ok(Self { mu: dist.mu().clone(), chol: dist.sigma_cholesky().clone(), alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn contains_ellipsoid(&self, y: &[f64]) -> Result<bool> {
        check_dim(self.mu.len(), y.len())?;
        if self.alpha < 0.0 {
            // β < 1/2: no outcome is safe for every direction.
            return Ok(true);
        }
        let diff = DVector::from_iterator(y.len(), y.iter().zip(self.mu.iter()).map(|(a, b)| a - b));
        Ok(mahalanobis_with(&self.chol, &diff) > self.alpha * self.alpha)
    }
}

impl RiskRegion for EllipsoidRegion {
    fn kind(&self) -> &'static str {
        "ellipsoid"
    }

    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn contains(&self, y: &[f64]) -> Result<bool> {
        self.contains_ellipsoid(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_examples() {
        let dist = EllipticalDist::standard_normal(2).unwrap();
        let r = EllipsoidRegion::from_dist(&dist, 0.95).unwrap();
        assert!((r.alpha() * r.alpha() - 2.7055).abs() < 1e-3);
        assert!(!r.contains(&[1.0, 1.0]).unwrap());
        assert!(r.contains(&[2.0, 2.0]).unwrap());
        for beta in [0.5, 0.6, 0.9, 0.999] {
            let r = EllipsoidRegion::from_dist(&dist, beta).unwrap();
            assert!(!r.contains(&[0.0, 0.0]).unwrap(), "beta={beta}");
        }
    }

    #[test]
    fn rejects_non_spd() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(EllipsoidRegion::new(DVector::zeros(2), sigma, 1.0, 0.9), Err(Error::Singular(_))));
    }
}
