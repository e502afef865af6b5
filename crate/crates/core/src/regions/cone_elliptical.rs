use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::{LossOrientation, RiskRegion};
use crate::cone::{norm, transform_cone, ConeSpec};
use crate::distributions::EllipticalDist;
use crate::error::{check_dim, check_probability_open, Result};

/// Exact risk region for portfolios restricted to a convex set `𝒳` whose
/// conic hull is `K`, with returns `Y = PᵀX + μ`.
///
/// A point is in the non-risk region iff `‖p_{K'}(ỹ)‖ ≤ α` where
/// `K' = P·K`, `α = F_{X₁}⁻¹(β)` and `ỹ = (Pᵀ)⁻¹ w`. The shifted point is
/// `w = μ − y` for the loss `−xᵀy` (`Decreasing`) and `w = y − μ` for the
/// loss `xᵀy` (`Increasing`). With `K = ℝᵈ` both reduce to the ellipsoid
/// `(y − μ)ᵀ Σ⁻¹ (y − μ) ≤ α²`.
#[derive(Debug, Clone)]
pub struct ConeEllipticalRegion {
    mu: DVector<f64>,
    pt_lu: LU<f64, Dyn, Dyn>,
    cone: ConeSpec,
    image_cone: ConeSpec,
    alpha: f64,
    beta: f64,
    orientation: LossOrientation,
}

impl ConeEllipticalRegion {
    pub fn new(dist: &EllipticalDist, cone: ConeSpec, beta: f64, orientation: LossOrientation) -> Result<Self> {
        let alpha = dist.marginal_quantile(beta)?;
        Self::from_parts(dist.p().clone(), dist.mu().clone(), cone, alpha, beta, orientation)
    }

    pub fn from_parts(
        p: DMatrix<f64>,
        mu: DVector<f64>,
        cone: ConeSpec,
        alpha: f64,
        beta: f64,
        orientation: LossOrientation,
    ) -> Result<Self> {
        check_probability_open(beta, "beta")?;
        check_dim(mu.len(), cone.dim())?;
        let image_cone = transform_cone(&cone, &p)?;
        let pt_lu = p.transpose().lu();
        Ok(Self { mu, pt_lu, cone, image_cone, alpha, beta, orientation })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn cone(&self) -> &ConeSpec {
        &self.cone
    }

    /// `K' = P·K`.
    pub fn image_cone(&self) -> &ConeSpec {
        &self.image_cone
    }

    pub fn orientation(&self) -> LossOrientation {
        self.orientation
    }

    /// `‖p_{K'}(ỹ)‖`, the quantity compared against `α`.
    pub fn projected_norm(&self, y: &[f64]) -> Result<f64> {
        check_dim(self.mu.len(), y.len())?;
        let w = DVector::from_iterator(
            y.len(),
            y.iter().zip(self.mu.iter()).map(|(yi, mi)| match self.orientation {
                LossOrientation::Increasing => yi - mi,
                LossOrientation::Decreasing => mi - yi,
            }),
        );
        let y_tilde = self.pt_lu.solve(&w).ok_or_else(|| crate::error::Error::Singular("Pᵀ is singular".into()))?;
        let p = self.image_cone.project(y_tilde.as_slice())?;
        Ok(norm(&p))
    }

    pub fn contains_cone_elliptical(&self, y: &[f64]) -> Result<bool> {
        Ok(self.projected_norm(y)? > self.alpha)
    }
}

impl RiskRegion for ConeEllipticalRegion {
    fn kind(&self) -> &'static str {
        match self.cone {
            ConeSpec::NonnegOrthant(_) => "orthant",
            ConeSpec::FullSpace(_) => "cone-full",
            ConeSpec::Generated(_) => "cone",
        }
    }

    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn contains(&self, y: &[f64]) -> Result<bool> {
        self.contains_cone_elliptical(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::EllipsoidRegion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn orthant_region(beta: f64, orientation: LossOrientation) -> ConeEllipticalRegion {
        let dist = EllipticalDist::standard_normal(2).unwrap();
        ConeEllipticalRegion::new(&dist, ConeSpec::NonnegOrthant(2), beta, orientation).unwrap()
    }

    #[test]
    fn orthant_examples() {
        let r = orthant_region(0.95, LossOrientation::Increasing);
        assert!(!r.contains(&[-5.0, 1.0]).unwrap());
        assert!(r.contains(&[1.5, 1.5]).unwrap());
        // The portfolio loss −xᵀy puts the tail on the negative side.
        let r = orthant_region(0.95, LossOrientation::Decreasing);
        assert!(r.contains(&[-5.0, 1.0]).unwrap());
        assert!(!r.contains(&[1.5, 1.5]).unwrap());
        assert!(r.contains(&[-1.5, -1.5]).unwrap());
    }

    #[test]
    fn full_space_matches_ellipsoid() {
        let p = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.0, 0.8, 0.3, 0.5, 0.0, 1.2]);
        let mu = DVector::from_vec(vec![0.1, -0.2, 0.3]);
        let dist = EllipticalDist::new(crate::distributions::RadialFamily::Normal, p, mu).unwrap();
        let ell = EllipsoidRegion::from_dist(&dist, 0.9).unwrap();
        let cone = ConeEllipticalRegion::new(&dist, ConeSpec::FullSpace(3), 0.9, LossOrientation::Decreasing).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-4.0..4.0)).collect();
            assert_eq!(ell.contains(&y).unwrap(), cone.contains(&y).unwrap());
        }
    }
}
