use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::special::{std_normal_cdf, std_normal_quantile};
use crate::error::{check_dim, check_probability_open, Error, Result};

/// Relative threshold on the smallest singular value of `P`.
pub const SINGULARITY_EPS: f64 = 1e-12;

/// Radial part of a spherical distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialFamily {
    Normal,
    StudentT { dof: f64 },
}

/// `Y = Pᵀ X + μ` with `X` spherical, so that `Σ = PᵀP` and
/// `xᵀY ~ ‖Px‖ X₁ + xᵀμ`.
///
/// For the Normal family `Σ` is the covariance of `Y`; for Student-t it is
/// the scatter matrix.
#[derive(Debug, Clone)]
pub struct EllipticalDist {
    family: RadialFamily,
    p: DMatrix<f64>,
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    sigma_chol: Cholesky<f64, Dyn>,
    diagonal: bool,
}

impl EllipticalDist {
    pub fn new(family: RadialFamily, p: DMatrix<f64>, mu: DVector<f64>) -> Result<Self> {
        if !p.is_square() {
            return Err(Error::Domain(format!("P must be square, got {}x{}", p.nrows(), p.ncols())));
        }
        let d = p.nrows();
        if d == 0 {
            return Err(Error::Domain("dimension must be ≥ 1".into()));
        }
        check_dim(d, mu.len())?;
        if p.iter().chain(mu.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("P and mu must be finite".into()));
        }
        if let RadialFamily::StudentT { dof } = family {
            if !(dof.is_finite() && dof > 0.0) {
                return Err(Error::Domain(format!("Student-t degrees of freedom must be > 0, got {dof}")));
            }
        }
        check_nonsingular(&p)?;
        let sigma = p.transpose() * &p;
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let sigma_chol = Cholesky::new(sigma.clone())
            .ok_or_else(|| Error::Singular("Sigma = PᵀP is not positive definite".into()))?;
        let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || p[(i, j)] == 0.0));
        Ok(Self { family, p, mu, sigma, sigma_chol, diagonal })
    }

    /// Builds the distribution from a covariance (scatter) matrix using the
    /// upper Cholesky factor as `P`.
    pub fn from_covariance(family: RadialFamily, mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::Domain("Sigma must be square".into()));
        }
        let sym = (&sigma + sigma.transpose()) * 0.5;
        if (&sym - &sigma).amax() > 1e-10 * sigma.amax().max(1.0) {
            return Err(Error::Domain("Sigma must be symmetric".into()));
        }
        let chol = Cholesky::new(sym).ok_or_else(|| Error::Singular("Sigma is not positive definite".into()))?;
        let p = chol.l().transpose();
        Self::new(family, p, mu)
    }

    pub fn standard_normal(d: usize) -> Result<Self> {
        Self::new(RadialFamily::Normal, DMatrix::identity(d, d), DVector::zeros(d))
    }

    /// Zero-mean Normal with covariance `Λ(ρ)`: unit diagonal, `ρ` elsewhere.
    pub fn equicorrelated_normal(d: usize, rho: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("dimension must be ≥ 1".into()));
        }
        if rho == 0.0 {
            return Self::standard_normal(d);
        }
        let lo = if d > 1 { -1.0 / (d as f64 - 1.0) } else { -1.0 };
        if !(rho > lo && rho < 1.0) {
            return Err(Error::Domain(format!("equicorrelation rho={rho} is not positive definite for d={d}")));
        }
        let sigma = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho });
        Self::from_covariance(RadialFamily::Normal, DVector::zeros(d), sigma)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn family(&self) -> RadialFamily {
        self.family
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `true` when `P` is diagonal. For the Normal family this means the
    /// components are independent.
    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn has_independent_components(&self) -> bool {
        self.diagonal && self.family == RadialFamily::Normal
    }

    /// `F_{X₁}⁻¹(β)`, the quantile of one component of the spherical part.
    pub fn marginal_quantile(&self, beta: f64) -> Result<f64> {
        check_probability_open(beta, "beta")?;
        match self.family {
            RadialFamily::Normal => std_normal_quantile(beta),
            RadialFamily::StudentT { dof } => {
                let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Domain(e.to_string()))?;
                Ok(t.inverse_cdf(beta))
            }
        }
    }

    /// `F_{X₁}(z)`.
    pub fn marginal_cdf(&self, z: f64) -> f64 {
        match self.family {
            RadialFamily::Normal => std_normal_cdf(z),
            RadialFamily::StudentT { dof } => StudentsT::new(0.0, 1.0, dof).map(|t| t.cdf(z)).unwrap_or(f64::NAN),
        }
    }

    /// `(y − μ)ᵀ Σ⁻¹ (y − μ)`.
    pub fn mahalanobis_sq(&self, y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), y.len())?;
        let diff = DVector::from_iterator(y.len(), y.iter().zip(self.mu.iter()).map(|(a, b)| a - b));
        Ok(mahalanobis_with(&self.sigma_chol, &diff))
    }

    pub(crate) fn sigma_cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.sigma_chol
    }

    /// Draws one point into `out`.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.dim();
        debug_assert_eq!(out.len(), d);
        let mut x: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        if let RadialFamily::StudentT { dof } = self.family {
            let w: f64 = ChiSquared::new(dof).expect("dof validated at construction").sample(rng);
            let scale = (dof / w).sqrt();
            x.iter_mut().for_each(|v| *v *= scale);
        }
        // y = Pᵀx + μ
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = self.mu[j];
            for (i, xi) in x.iter().enumerate() {
                acc += self.p[(i, j)] * xi;
            }
            *o = acc;
        }
    }
}

pub(crate) fn mahalanobis_with(chol: &Cholesky<f64, Dyn>, diff: &DVector<f64>) -> f64 {
    let z = chol.l_dirty().solve_lower_triangular(diff).expect("Cholesky factor has a nonzero diagonal");
    z.norm_squared()
}

/// Rejects matrices whose smallest singular value is below
/// `SINGULARITY_EPS` times the largest.
pub fn check_nonsingular(p: &DMatrix<f64>) -> Result<()> {
    let sv = p.singular_values();
    let max = sv.max();
    let min = sv.min();
    if max.is_nan() || max <= 0.0 || min <= SINGULARITY_EPS * max {
        return Err(Error::Singular(format!("matrix is singular (singular values in [{min:e}, {max:e}])")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_singular_p() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let r = EllipticalDist::new(RadialFamily::Normal, p, DVector::zeros(2));
        assert!(matches!(r, Err(Error::Singular(_))));
    }

    #[test]
    fn sigma_is_ptp() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let dist = EllipticalDist::new(RadialFamily::Normal, p.clone(), DVector::zeros(2)).unwrap();
        assert!((dist.sigma() - p.transpose() * &p).amax() < 1e-15);
        assert!(!dist.is_diagonal());
    }

    #[test]
    fn from_covariance_round_trips() {
        let sigma = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 2.0, 0.3, 0.5, 0.3, 1.0]);
        let dist = EllipticalDist::from_covariance(RadialFamily::Normal, DVector::zeros(3), sigma.clone()).unwrap();
        assert!((dist.sigma() - sigma).amax() < 1e-12);
    }

    #[test]
    fn equicorrelation_bounds() {
        assert!(EllipticalDist::equicorrelated_normal(3, 0.3).is_ok());
        assert!(EllipticalDist::equicorrelated_normal(3, -0.6).is_err());
        assert!(EllipticalDist::equicorrelated_normal(3, 1.0).is_err());
    }

    #[test]
    fn mahalanobis_identity() {
        let dist = EllipticalDist::standard_normal(2).unwrap();
        assert!((dist.mahalanobis_sq(&[1.0, 1.0]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn student_quantile_exceeds_normal() {
        let t = EllipticalDist::new(RadialFamily::StudentT { dof: 4.0 }, DMatrix::identity(2, 2), DVector::zeros(2))
            .unwrap();
        let n = EllipticalDist::standard_normal(2).unwrap();
        // t_4 0.95-quantile is 2.131847
        assert!((t.marginal_quantile(0.95).unwrap() - 2.131_847).abs() < 1e-5);
        assert!(t.marginal_quantile(0.95).unwrap() > n.marginal_quantile(0.95).unwrap());
    }
}
