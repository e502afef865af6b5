//! Risk regions: membership-testable supersets of the set of outcomes that
//! can reach the β-tail of the loss for some feasible decision.
//!
//! Every region kind implements [`RiskRegion`]. Kinds are registered by
//! name in a [`RegionRegistry`] so experiments and the CLI can select them
//! at runtime.

mod cone_elliptical;
mod ellipsoid;
mod monotonic;
mod oracle;

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cone_elliptical::ConeEllipticalRegion;
pub use ellipsoid::EllipsoidRegion;
pub use monotonic::MonotonicRegion;
pub use oracle::{
    check_aggregation_preserves_tail, discrete_risk_region_oracle, LossFunction, PortfolioLoss, TailCheck,
    TAIL_CHECK_TOL,
};

use crate::cone::{conic_hull_of_simplex, ConeSpec};
use crate::distributions::{EllipticalDist, DEFAULT_SURVIVOR_SAMPLES};
use crate::error::{check_probability_open, Error, Result};

pub trait RiskRegion: Send + Sync + Debug {
    /// Registry name of the region kind.
    fn kind(&self) -> &'static str;

    fn dim(&self) -> usize;

    fn beta(&self) -> f64;

    /// `true` iff `y` lies in the risk region. Points outside it belong to
    /// the aggregation region.
    fn contains(&self, y: &[f64]) -> Result<bool>;
}

/// Direction in which the loss moves when the outcome grows element-wise.
///
/// Portfolio loss `−xᵀy` with `x ≥ 0` is `Decreasing`; a loss `xᵀy` (for
/// instance `y` a vector of costs) is `Increasing`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossOrientation {
    Increasing,
    #[default]
    Decreasing,
}

impl std::str::FromStr for LossOrientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "increasing" => Ok(Self::Increasing),
            "decreasing" => Ok(Self::Decreasing),
            other => Err(Error::Parse(format!("unknown loss orientation `{other}`"))),
        }
    }
}

/// The trivial region where every outcome is a risk outcome (nothing is
/// aggregated).
#[derive(Debug, Clone)]
pub struct WholeSpace {
    dim: usize,
    beta: f64,
}

impl WholeSpace {
    pub fn new(dim: usize, beta: f64) -> Self {
        Self { dim, beta }
    }
}

impl RiskRegion for WholeSpace {
    fn kind(&self) -> &'static str {
        "everything"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn contains(&self, y: &[f64]) -> Result<bool> {
        crate::error::check_dim(self.dim, y.len())?;
        Ok(true)
    }
}

/// Serializable description of a region built against a distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum RiskRegionSpec {
    Monotonic { beta: f64, orientation: LossOrientation, survivor_samples: usize, seed: u64 },
    Ellipsoid { beta: f64 },
    ConeElliptical { beta: f64, cone: ConeSpec, orientation: LossOrientation },
    Everything { beta: f64 },
}

impl RiskRegionSpec {
    pub fn beta(&self) -> f64 {
        match self {
            Self::Monotonic { beta, .. }
            | Self::Ellipsoid { beta }
            | Self::ConeElliptical { beta, .. }
            | Self::Everything { beta } => *beta,
        }
    }

    pub fn build(&self, dist: &EllipticalDist) -> Result<Arc<dyn RiskRegion>> {
        Ok(match self {
            Self::Monotonic { beta, orientation, survivor_samples, seed } => {
                Arc::new(MonotonicRegion::new(dist, *beta, *orientation, *survivor_samples, *seed)?)
            }
            Self::Ellipsoid { beta } => Arc::new(EllipsoidRegion::from_dist(dist, *beta)?),
            Self::ConeElliptical { beta, cone, orientation } => {
                Arc::new(ConeEllipticalRegion::new(dist, cone.clone(), *beta, *orientation)?)
            }
            Self::Everything { beta } => {
                check_probability_open(*beta, "beta")?;
                Arc::new(WholeSpace::new(dist.dim(), *beta))
            }
        })
    }
}

/// Inputs available to a region builder.
#[derive(Debug, Clone)]
pub struct RegionContext<'a> {
    pub dist: &'a EllipticalDist,
    pub beta: f64,
    pub orientation: LossOrientation,
    pub survivor_samples: usize,
    pub seed: u64,
}

impl<'a> RegionContext<'a> {
    pub fn new(dist: &'a EllipticalDist, beta: f64) -> Self {
        Self {
            dist,
            beta,
            orientation: LossOrientation::default(),
            survivor_samples: DEFAULT_SURVIVOR_SAMPLES,
            seed: 0,
        }
    }

    pub fn with_orientation(mut self, orientation: LossOrientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn with_survivor_samples(mut self, m: usize) -> Self {
        self.survivor_samples = m;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub type RegionBuilder = fn(&RegionContext<'_>) -> Result<Arc<dyn RiskRegion>>;

/// Name → builder table for region kinds.
#[derive(Clone)]
pub struct RegionRegistry {
    builders: BTreeMap<String, RegionBuilder>,
}

impl Debug for RegionRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.builders.keys()).finish()
    }
}

impl Default for RegionRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

fn build_ellipsoid(ctx: &RegionContext<'_>) -> Result<Arc<dyn RiskRegion>> {
    RiskRegionSpec::Ellipsoid { beta: ctx.beta }.build(ctx.dist)
}

fn build_orthant(ctx: &RegionContext<'_>) -> Result<Arc<dyn RiskRegion>> {
    let cone = conic_hull_of_simplex(ctx.dist.dim())?;
    RiskRegionSpec::ConeElliptical { beta: ctx.beta, cone, orientation: ctx.orientation }.build(ctx.dist)
}

fn build_monotonic(ctx: &RegionContext<'_>) -> Result<Arc<dyn RiskRegion>> {
    RiskRegionSpec::Monotonic {
        beta: ctx.beta,
        orientation: ctx.orientation,
        survivor_samples: ctx.survivor_samples,
        seed: ctx.seed,
    }
    .build(ctx.dist)
}

fn build_everything(ctx: &RegionContext<'_>) -> Result<Arc<dyn RiskRegion>> {
    RiskRegionSpec::Everything { beta: ctx.beta }.build(ctx.dist)
}

impl RegionRegistry {
    pub fn empty() -> Self {
        Self { builders: BTreeMap::new() }
    }

    /// `ellipsoid`, `orthant` (exact region for the no-short-selling
    /// simplex), `monotonic` (conservative orthant-probability region) and
    /// `everything`.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register("ellipsoid", build_ellipsoid);
        r.register("orthant", build_orthant);
        r.register("monotonic", build_monotonic);
        r.register("everything", build_everything);
        r
    }

    pub fn register(&mut self, name: &str, builder: RegionBuilder) {
        self.builders.insert(name.to_string(), builder);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.builders.contains_key(name)
    }

    pub fn build(&self, name: &str, ctx: &RegionContext<'_>) -> Result<Arc<dyn RiskRegion>> {
        let builder = self.builders.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.names().collect();
            Error::Domain(format!("unknown region kind `{name}` (known: {})", known.join(", ")))
        })?;
        builder(ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_defaults_and_unknown() {
        let reg = RegionRegistry::with_defaults();
        let names: Vec<&str> = reg.names().collect();
        assert_eq!(names, ["ellipsoid", "everything", "monotonic", "orthant"]);
        let dist = EllipticalDist::standard_normal(2).unwrap();
        let ctx = RegionContext::new(&dist, 0.95).with_survivor_samples(1000);
        for n in names {
            let r = reg.build(n, &ctx).unwrap();
            assert_eq!(r.kind(), n);
            assert_eq!(r.dim(), 2);
        }
        assert!(matches!(reg.build("nope", &ctx), Err(Error::Domain(_))));
    }

    #[test]
    fn everything_contains_all() {
        let r = WholeSpace::new(3, 0.9);
        assert!(r.contains(&[0.0, 0.0, 0.0]).unwrap());
        assert!(r.contains(&[0.0]).is_err());
    }

    #[test]
    fn orientation_parses() {
        assert_eq!("increasing".parse::<LossOrientation>().unwrap(), LossOrientation::Increasing);
        assert!("up".parse::<LossOrientation>().is_err());
    }
}
