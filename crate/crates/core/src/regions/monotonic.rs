use super::{LossOrientation, RiskRegion};
use crate::distributions::{EllipticalDist, SurvivorEstimator};
use crate::error::{check_probability_open, Result};

/// Conservative risk region for monotonic loss functions.
///
/// For an increasing loss the region is `{y : Prob{Y > y} ≤ 1 − β}`; for a
/// decreasing loss it is the mirror image `{y : Prob{Y < y} ≤ 1 − β}`.
/// Orthant probabilities come from a [`SurvivorEstimator`] fixed at
/// construction, so membership is deterministic.
#[derive(Debug, Clone)]
pub struct MonotonicRegion {
    beta: f64,
    orientation: LossOrientation,
    estimator: SurvivorEstimator,
}

impl MonotonicRegion {
    pub fn new(
        dist: &EllipticalDist,
        beta: f64,
        orientation: LossOrientation,
        survivor_samples: usize,
        seed: u64,
    ) -> Result<Self> {
        check_probability_open(beta, "beta")?;
        Ok(Self { beta, orientation, estimator: SurvivorEstimator::new(dist, survivor_samples, seed) })
    }

    pub fn from_estimator(estimator: SurvivorEstimator, beta: f64, orientation: LossOrientation) -> Result<Self> {
        check_probability_open(beta, "beta")?;
        Ok(Self { beta, orientation, estimator })
    }

    pub fn orientation(&self) -> LossOrientation {
        self.orientation
    }

    pub fn estimator(&self) -> &SurvivorEstimator {
        &self.estimator
    }

    pub fn contains_monotonic(&self, y: &[f64]) -> Result<bool> {
        let level = 1.0 - self.beta;
        match self.orientation {
            LossOrientation::Increasing => self.estimator.survivor_at_most(y, level),
            LossOrientation::Decreasing => self.estimator.lower_orthant_at_most(y, level),
        }
    }
}

impl RiskRegion for MonotonicRegion {
    fn kind(&self) -> &'static str {
        "monotonic"
    }

    fn dim(&self) -> usize {
        self.estimator.dim()
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn contains(&self, y: &[f64]) -> Result<bool> {
        self.contains_monotonic(y)
    }
}
