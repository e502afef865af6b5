//! Scenario generation: aggregation sampling, aggregation reduction and the
//! discrete aggregation map, plus a name-keyed registry of generators.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use serde::Serialize;

use crate::distributions::{weighted_mean_where, SampleStream};
use crate::error::{check_dim, Error, Result};
use crate::regions::{RegionContext, RegionRegistry, RiskRegion};
use crate::scenario::ScenarioSet;

/// Default limit on the number of draws in one aggregation-sampling run.
pub const DEFAULT_DRAW_CAP: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggSamplingReport {
    #[serde(skip)]
    pub scenario_set: ScenarioSet,
    pub n_risk: usize,
    pub n_agg: usize,
    pub effective_sample_size: u64,
    pub seed: u64,
    /// The last point is a fresh draw rather than an aggregate because no
    /// draw fell in the aggregation region.
    #[serde(skip)]
    pub extra_draw: bool,
}

impl AggSamplingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Draws until `n_risk_target` draws lie in the risk region, folding every
/// other draw into a running mean (Algorithm "aggregation sampling").
///
/// Risk scenarios come first in the output and carry probability
/// `1/(n_agg + n_risk)`; the last point is the aggregate with probability
/// `n_agg/(n_agg + n_risk)`. If nothing was aggregated, one extra point is
/// drawn and takes the aggregate's place with `n_agg = 1`.
pub fn aggregation_sampling(
    stream: &mut SampleStream,
    region: &dyn RiskRegion,
    n_risk_target: usize,
) -> Result<AggSamplingReport> {
    aggregation_sampling_capped(stream, region, n_risk_target, DEFAULT_DRAW_CAP)
}

pub fn aggregation_sampling_capped(
    stream: &mut SampleStream,
    region: &dyn RiskRegion,
    n_risk_target: usize,
    draw_cap: u64,
) -> Result<AggSamplingReport> {
    check_dim(region.dim(), stream.dim())?;
    if n_risk_target == 0 {
        return Err(Error::Domain("n_risk_target must be at least 1".into()));
    }
    let d = stream.dim();
    let mut risk = Vec::with_capacity(n_risk_target * d);
    let mut agg_mean = vec![0.0; d];
    let mut n_risk = 0usize;
    let mut n_agg = 0usize;
    let mut draws = 0u64;
    let mut y = vec![0.0; d];
    while n_risk < n_risk_target {
        if draws >= draw_cap {
            return Err(Error::DrawCapExceeded { cap: draw_cap, n_risk });
        }
        stream.draw_into(&mut y);
        draws += 1;
        if region.contains(&y)? {
            risk.extend_from_slice(&y);
            n_risk += 1;
        } else {
            let k = n_agg as f64;
            for (m, v) in agg_mean.iter_mut().zip(&y) {
                *m = (k * *m + v) / (k + 1.0);
            }
            n_agg += 1;
        }
    }
    let extra_draw = n_agg == 0;
    if extra_draw {
        stream.draw_into(&mut agg_mean);
        n_agg = 1;
    }
    let total = (n_agg + n_risk) as f64;
    let mut probs = vec![1.0 / total; n_risk];
    probs.push(n_agg as f64 / total);
    risk.extend_from_slice(&agg_mean);
    Ok(AggSamplingReport {
        scenario_set: ScenarioSet::from_flat(d, risk, probs)?,
        n_risk,
        n_agg,
        effective_sample_size: (n_risk + n_agg) as u64,
        seed: stream.seed(),
        extra_draw,
    })
}

/// The aggregated distribution: scenarios with `mask[i]` kept, the rest
/// replaced by their conditional mean carrying their total probability. The
/// aggregate (if any) comes first.
pub fn aggregate_discrete(scens: &ScenarioSet, mask: &[bool]) -> Result<ScenarioSet> {
    check_dim(scens.len(), mask.len())?;
    if mask.iter().all(|m| *m) {
        return Ok(scens.clone());
    }
    let outside: Vec<bool> = mask.iter().map(|m| !m).collect();
    let mass: f64 = crate::scenario::accurate_sum(scens.iter().zip(&outside).filter(|(_, o)| **o).map(|((p, _), _)| p));
    let mut points = Vec::with_capacity(scens.len() * scens.dim());
    let mut probs = Vec::with_capacity(scens.len());
    if mass > 0.0 {
        points.extend(weighted_mean_where(scens, &outside)?);
    } else {
        // Zero-probability points: any representative keeps the distribution.
        let first = outside.iter().position(|o| *o).expect("some point is outside");
        points.extend_from_slice(scens.point(first));
    }
    probs.push(mass);
    for (i, (p, y)) in scens.iter().enumerate() {
        if mask[i] {
            points.extend_from_slice(y);
            probs.push(p);
        }
    }
    ScenarioSet::from_flat(scens.dim(), points, probs)
}

/// Keeps the sample points inside the risk region and replaces the others
/// by their mean.
pub fn aggregation_reduction(sample: &ScenarioSet, region: &dyn RiskRegion) -> Result<ScenarioSet> {
    check_dim(region.dim(), sample.dim())?;
    let mask = sample.points().map(|y| region.contains(y)).collect::<Result<Vec<bool>>>()?;
    aggregate_discrete(sample, &mask)
}

/// `(n + n·q/(1−q), n·q)`: expected effective sample size of aggregation
/// sampling and expected number of points aggregated by reduction, where `q`
/// is the probability of the aggregation region.
pub fn effective_size_stats(n: usize, q: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Domain(format!("aggregation-region probability must lie in [0, 1), got {q}")));
    }
    let n = n as f64;
    Ok((n + n * q / (1.0 - q), n * q))
}

/// Output of a [`ScenarioGenerator`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScenarios {
    pub scenarios: ScenarioSet,
    /// Number of draws consumed.
    pub effective_sample_size: u64,
    pub n_aggregated: usize,
}

/// A method turning draws from a stream into a scenario set of a requested
/// size.
pub trait ScenarioGenerator: Send + Sync + Debug {
    fn name(&self) -> String;

    fn generate(&self, stream: &mut SampleStream, size: usize) -> Result<GeneratedScenarios>;
}

/// Equiprobable plain sampling.
#[derive(Debug, Clone, Default)]
pub struct PlainSampling;

impl ScenarioGenerator for PlainSampling {
    fn name(&self) -> String {
        "sampling".into()
    }

    fn generate(&self, stream: &mut SampleStream, size: usize) -> Result<GeneratedScenarios> {
        let scenarios = ScenarioSet::equiprobable(stream.sample(size))?;
        Ok(GeneratedScenarios { scenarios, effective_sample_size: size as u64, n_aggregated: 0 })
    }
}

/// Aggregation sampling producing `size` scenarios: `size − 1` risk
/// scenarios plus the aggregate.
#[derive(Debug, Clone)]
pub struct AggregationSampler {
    region: Arc<dyn RiskRegion>,
    region_name: String,
    draw_cap: u64,
}

impl AggregationSampler {
    pub fn new(region: Arc<dyn RiskRegion>, region_name: &str) -> Self {
        Self { region, region_name: region_name.to_string(), draw_cap: DEFAULT_DRAW_CAP }
    }

    pub fn with_draw_cap(mut self, cap: u64) -> Self {
        self.draw_cap = cap;
        self
    }
}

impl ScenarioGenerator for AggregationSampler {
    fn name(&self) -> String {
        format!("aggregation-sampling/{}", self.region_name)
    }

    fn generate(&self, stream: &mut SampleStream, size: usize) -> Result<GeneratedScenarios> {
        if size < 2 {
            return Err(Error::Domain("aggregation sampling needs a scenario-set size of at least 2".into()));
        }
        let r = aggregation_sampling_capped(stream, self.region.as_ref(), size - 1, self.draw_cap)?;
        Ok(GeneratedScenarios {
            n_aggregated: if r.extra_draw { 0 } else { r.n_agg },
            effective_sample_size: r.effective_sample_size,
            scenarios: r.scenario_set,
        })
    }
}

/// Draws `size` points and reduces them by aggregation.
#[derive(Debug, Clone)]
pub struct AggregationReducer {
    region: Arc<dyn RiskRegion>,
    region_name: String,
}

impl AggregationReducer {
    pub fn new(region: Arc<dyn RiskRegion>, region_name: &str) -> Self {
        Self { region, region_name: region_name.to_string() }
    }
}

impl ScenarioGenerator for AggregationReducer {
    fn name(&self) -> String {
        format!("aggregation-reduction/{}", self.region_name)
    }

    fn generate(&self, stream: &mut SampleStream, size: usize) -> Result<GeneratedScenarios> {
        let sample = ScenarioSet::equiprobable(stream.sample(size))?;
        let scenarios = aggregation_reduction(&sample, self.region.as_ref())?;
        let n_aggregated = size + 1 - scenarios.len();
        let n_aggregated = if scenarios.len() == size { 0 } else { n_aggregated };
        Ok(GeneratedScenarios { scenarios, effective_sample_size: size as u64, n_aggregated })
    }
}

/// Builds a generator from a region context and an optional region name.
pub type GeneratorBuilder = fn(&RegionContext<'_>, Option<&str>, &RegionRegistry) -> Result<Arc<dyn ScenarioGenerator>>;

#[derive(Clone)]
pub struct GeneratorRegistry {
    builders: BTreeMap<String, GeneratorBuilder>,
    regions: RegionRegistry,
}

impl Debug for GeneratorRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneratorRegistry")
            .field("methods", &self.builders.keys().collect::<Vec<_>>())
            .field("regions", &self.regions)
            .finish()
    }
}

impl Default for GeneratorRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

fn region_for(
    ctx: &RegionContext<'_>,
    region: Option<&str>,
    regions: &RegionRegistry,
) -> Result<(Arc<dyn RiskRegion>, String)> {
    let name = region.ok_or_else(|| Error::Domain("this method needs a risk region".into()))?;
    Ok((regions.build(name, ctx)?, name.to_string()))
}

fn build_sampling(_: &RegionContext<'_>, _: Option<&str>, _: &RegionRegistry) -> Result<Arc<dyn ScenarioGenerator>> {
    Ok(Arc::new(PlainSampling))
}

fn build_agg_sampling(
    ctx: &RegionContext<'_>,
    region: Option<&str>,
    regions: &RegionRegistry,
) -> Result<Arc<dyn ScenarioGenerator>> {
    let (r, name) = region_for(ctx, region, regions)?;
    Ok(Arc::new(AggregationSampler::new(r, &name)))
}

fn build_agg_reduction(
    ctx: &RegionContext<'_>,
    region: Option<&str>,
    regions: &RegionRegistry,
) -> Result<Arc<dyn ScenarioGenerator>> {
    let (r, name) = region_for(ctx, region, regions)?;
    Ok(Arc::new(AggregationReducer::new(r, &name)))
}

impl GeneratorRegistry {
    /// `sampling`, `aggregation-sampling` and `aggregation-reduction`, with
    /// the default region registry.
    pub fn with_defaults() -> Self {
        let mut r = Self { builders: BTreeMap::new(), regions: RegionRegistry::with_defaults() };
        r.register("sampling", build_sampling);
        r.register("aggregation-sampling", build_agg_sampling);
        r.register("aggregation-reduction", build_agg_reduction);
        r
    }

    pub fn register(&mut self, name: &str, builder: GeneratorBuilder) {
        self.builders.insert(name.to_string(), builder);
    }

    pub fn regions(&self) -> &RegionRegistry {
        &self.regions
    }

    pub fn regions_mut(&mut self) -> &mut RegionRegistry {
        &mut self.regions
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn build(
        &self,
        method: &str,
        region: Option<&str>,
        ctx: &RegionContext<'_>,
    ) -> Result<Arc<dyn ScenarioGenerator>> {
        let builder = self.builders.get(method).ok_or_else(|| {
            let known: Vec<&str> = self.names().collect();
            Error::Domain(format!("unknown scenario generator `{method}` (known: {})", known.join(", ")))
        })?;
        builder(ctx, region, &self.regions)
    }
}
