//! Probability primitives: Normal and χ² special functions, elliptical
//! distributions with reproducible sampling, orthant probabilities and
//! conditional means over aggregation regions.

mod elliptical;
mod special;
mod stream;
mod survivor;

pub use elliptical::{check_nonsingular, EllipticalDist, RadialFamily, SINGULARITY_EPS};
pub use special::{chi2_cdf, std_normal_cdf, std_normal_pdf, std_normal_quantile, std_normal_sf};
pub use stream::{derive_seed, SampleStream};
pub use survivor::{survivor_estimate, CrnSample, SurvivorEstimator, DEFAULT_SURVIVOR_SAMPLES};

pub(crate) use elliptical::mahalanobis_with;

use crate::error::{check_dim, Error, Result};
use crate::regions::RiskRegion;
use crate::scenario::{accurate_sum, ScenarioSet};

/// `E[Y | Y ∉ R]` over a discrete scenario set (probability-weighted).
pub fn cond_expect_outside(scens: &ScenarioSet, region: &dyn RiskRegion) -> Result<Vec<f64>> {
    check_dim(region.dim(), scens.dim())?;
    let mut mask = Vec::with_capacity(scens.len());
    for y in scens.points() {
        mask.push(!region.contains(y)?);
    }
    weighted_mean_where(scens, &mask)
}

/// Monte Carlo estimate of `E[Y | Y ∉ R]` from `m` draws of `stream`.
pub fn cond_expect_outside_sampled(stream: &mut SampleStream, region: &dyn RiskRegion, m: usize) -> Result<Vec<f64>> {
    check_dim(region.dim(), stream.dim())?;
    let d = stream.dim();
    let mut sum = vec![0.0; d];
    let mut count = 0usize;
    let mut y = vec![0.0; d];
    for _ in 0..m {
        stream.draw_into(&mut y);
        if !region.contains(&y)? {
            count += 1;
            sum.iter_mut().zip(&y).for_each(|(s, v)| *s += v);
        }
    }
    if count == 0 {
        return Err(Error::EmptyAggregationRegion);
    }
    Ok(sum.into_iter().map(|s| s / count as f64).collect())
}

/// Probability-weighted mean of the scenarios where `mask` is true.
pub(crate) fn weighted_mean_where(scens: &ScenarioSet, mask: &[bool]) -> Result<Vec<f64>> {
    check_dim(scens.len(), mask.len())?;
    let mass = accurate_sum(scens.iter().zip(mask).filter(|(_, &m)| m).map(|((p, _), _)| p));
    if !mask.iter().any(|&m| m) || mass <= 0.0 {
        return Err(Error::EmptyAggregationRegion);
    }
    Ok((0..scens.dim())
        .map(|j| accurate_sum(scens.iter().zip(mask).filter(|(_, &m)| m).map(|((p, y), _)| p * y[j])) / mass)
        .collect())
}
