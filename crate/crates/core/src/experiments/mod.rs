//! Experiment harness: non-risk-region probability curves, the
//! effective-sample-size check and the portfolio stability study.
//!
//! Every report is a pure function of the configuration. Replications run
//! in parallel with per-replication derived seeds and are collected into
//! indexed slots, so the thread count never changes the output.

mod config;
mod market;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

pub use config::{ExperimentConfig, ExperimentKind};
pub use market::{market_from_returns, market_from_returns_str, synthetic_market, Market};

use crate::distributions::{chi2_cdf, derive_seed, std_normal_quantile, EllipticalDist, RadialFamily, SampleStream};
use crate::error::{Error, Result};
use crate::generation::{aggregation_sampling, effective_size_stats, GeneratorRegistry, ScenarioGenerator};
use crate::regions::{LossOrientation, RegionContext, RegionRegistry, RiskRegion};
use crate::tail_risk::{frontier_gap, solve_cvar_portfolio_with, solve_exact_normal, ExactSolution, PortfolioProblem};

const MC_CHUNK: usize = 10_000;
const Z_95: f64 = 1.96;

/// FNV-1a; used to turn labels into seed indices that do not depend on
/// iteration order.
fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in part.iter().chain(std::iter::once(&0xffu8)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Seed for one labelled task under a master seed.
pub fn task_seed(master: u64, label: &str, a: u64, b: u64) -> u64 {
    derive_seed(master, stable_hash(&[label.as_bytes(), &a.to_le_bytes(), &b.to_le_bytes()]))
}

/// Monte Carlo estimate of the aggregation-region probability
/// `q = Prob{Y ∉ R}` and its standard error.
pub fn estimate_nonrisk_probability(
    dist: &EllipticalDist,
    region: &dyn RiskRegion,
    m: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(Error::Domain("need at least one Monte Carlo draw".into()));
    }
    let chunks = m.div_ceil(MC_CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(m - c * MC_CHUNK);
            let mut stream = SampleStream::new(dist.clone(), derive_seed(seed, c as u64));
            let mut y = vec![0.0; dist.dim()];
            let mut outside = 0usize;
            for _ in 0..len {
                stream.draw_into(&mut y);
                if !region.contains(&y)? {
                    outside += 1;
                }
            }
            Ok(outside)
        })
        .collect::<Result<Vec<usize>>>()?;
    let q = counts.iter().sum::<usize>() as f64 / m as f64;
    Ok((q, (q * (1.0 - q) / m as f64).sqrt()))
}

fn region_kinds(cfg: &ExperimentConfig, default: &[&str]) -> Vec<String> {
    cfg.region_kinds.clone().unwrap_or_else(|| default.iter().map(|s| s.to_string()).collect())
}

fn check_kinds(kinds: &[String], registry: &RegionRegistry) -> Result<()> {
    for k in kinds {
        if !registry.contains(k) {
            let known: Vec<&str> = registry.names().collect();
            return Err(Error::Domain(format!("unknown region kind `{k}` (known: {})", known.join(", "))));
        }
    }
    Ok(())
}

fn model(cfg: &ExperimentConfig, d: usize, rho: f64) -> Result<EllipticalDist> {
    let normal = EllipticalDist::equicorrelated_normal(d, rho)?;
    match cfg.family() {
        RadialFamily::Normal => Ok(normal),
        family => EllipticalDist::new(family, normal.p().clone(), normal.mu().clone()),
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn csv_line(out: &mut String, fields: &[String]) {
    let quoted: Vec<String> = fields
        .iter()
        .map(|f| if f.contains([',', '"', '\n']) { format!("\"{}\"", f.replace('"', "\"\"")) } else { f.clone() })
        .collect();
    out.push_str(&quoted.join(","));
    out.push('\n');
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbCurveRow {
    pub d: usize,
    pub beta: f64,
    pub region_kind: String,
    pub rho: f64,
    pub q_estimate: f64,
    pub std_error: f64,
    /// `exact` for the χ² closed form, `monte_carlo` otherwise.
    pub estimator: &'static str,
}

/// Probability of the non-risk region per dimension, β, region kind and
/// equicorrelation.
pub fn run_prob_curves(cfg: &ExperimentConfig) -> Result<Vec<ProbCurveRow>> {
    cfg.validate()?;
    let registry = RegionRegistry::with_defaults();
    let kinds = region_kinds(cfg, &["ellipsoid", "orthant", "monotonic"]);
    check_kinds(&kinds, &registry)?;
    let d_max = cfg.d_max.unwrap_or(cfg.d);
    let orientation = cfg.orientation.unwrap_or_default();
    let mut rows = Vec::new();
    for d in 1..=d_max {
        for &beta in &cfg.beta {
            for kind in &kinds {
                for &rho in &cfg.rho {
                    let dist = model(cfg, d, rho)?;
                    if kind == "ellipsoid" && dist.family() == RadialFamily::Normal {
                        let alpha = std_normal_quantile(beta)?;
                        let q = if alpha <= 0.0 { 0.0 } else { chi2_cdf(alpha * alpha, d)? };
                        rows.push(ProbCurveRow {
                            d,
                            beta,
                            region_kind: kind.clone(),
                            rho,
                            q_estimate: q,
                            std_error: 0.0,
                            estimator: "exact",
                        });
                        continue;
                    }
                    let seed = task_seed(cfg.master_seed, &format!("prob-curves/{kind}/{beta}/{rho}"), d as u64, 0);
                    let ctx = RegionContext::new(&dist, beta)
                        .with_orientation(orientation)
                        .with_survivor_samples(cfg.survivor_samples)
                        .with_seed(derive_seed(seed, u64::MAX));
                    let region = registry.build(kind, &ctx)?;
                    let (q, se) = estimate_nonrisk_probability(&dist, region.as_ref(), cfg.mc_samples, seed)?;
                    rows.push(ProbCurveRow {
                        d,
                        beta,
                        region_kind: kind.clone(),
                        rho,
                        q_estimate: q,
                        std_error: se,
                        estimator: "monte_carlo",
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn prob_curves_csv(rows: &[ProbCurveRow]) -> String {
    let mut out = String::from("d,beta,region_kind,rho,q_estimate,std_error,estimator\n");
    for r in rows {
        csv_line(
            &mut out,
            &[
                r.d.to_string(),
                fmt_f64(r.beta),
                r.region_kind.clone(),
                fmt_f64(r.rho),
                fmt_f64(r.q_estimate),
                fmt_f64(r.std_error),
                r.estimator.to_string(),
            ],
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffSizeRow {
    pub d: usize,
    pub beta: f64,
    pub region_kind: String,
    pub rho: f64,
    pub n: usize,
    pub q: f64,
    pub q_std_error: f64,
    pub mean_n_empirical: f64,
    pub mean_n_formula: f64,
    pub z_score: f64,
    pub var_excess_empirical: f64,
    pub var_excess_formula: f64,
    pub var_z_score: f64,
    pub n_replications: usize,
}

/// Sample mean, unbiased variance and an estimate of the standard error of
/// that variance, `√((m₄ − s⁴)/R)`.
fn moments(xs: &[f64]) -> (f64, f64, f64) {
    let r = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / r;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / r;
    (mean, var, ((m4 - var * var).max(0.0) / r).sqrt())
}

/// Compares the effective sample size of aggregation sampling with
/// `n + n·q/(1−q)` and the variance of `N(n) − n` with `n·q/(1−q)²`, where
/// `q` is a Monte Carlo estimate. The z-scores include the uncertainty of `q`.
pub fn run_effsize_check(cfg: &ExperimentConfig) -> Result<Vec<EffSizeRow>> {
    cfg.validate()?;
    let registry = RegionRegistry::with_defaults();
    let kinds = region_kinds(cfg, &["orthant"]);
    check_kinds(&kinds, &registry)?;
    let orientation = cfg.orientation.unwrap_or_default();
    let n = cfg.n_risk;
    let mut rows = Vec::new();
    for &beta in &cfg.beta {
        for kind in &kinds {
            for &rho in &cfg.rho {
                let dist = model(cfg, cfg.d, rho)?;
                let label = format!("effsize/{kind}/{beta}/{rho}");
                let ctx = RegionContext::new(&dist, beta)
                    .with_orientation(orientation)
                    .with_survivor_samples(cfg.survivor_samples)
                    .with_seed(task_seed(cfg.master_seed, &label, u64::MAX, 1));
                let region = registry.build(kind, &ctx)?;
                let (q, se_q) = estimate_nonrisk_probability(
                    &dist,
                    region.as_ref(),
                    cfg.mc_samples,
                    task_seed(cfg.master_seed, &label, u64::MAX, 2),
                )?;
                let excess = (0..cfg.n_replications)
                    .into_par_iter()
                    .map(|rep| {
                        let mut stream =
                            SampleStream::new(dist.clone(), task_seed(cfg.master_seed, &label, rep as u64, 0));
                        let r = aggregation_sampling(&mut stream, region.as_ref(), n)?;
                        Ok((r.effective_sample_size - n as u64) as f64)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let (mean_excess, var_excess, se_var) = moments(&excess);
                let reps = excess.len() as f64;
                let nf = n as f64;
                let (mean_formula, var_formula, z, var_z) = if q < 1.0 {
                    let (expected, _) = effective_size_stats(n, q)?;
                    let var_formula = nf * q / (1.0 - q).powi(2);
                    let se_mean = (var_excess / reps + (nf * se_q / (1.0 - q).powi(2)).powi(2)).sqrt();
                    let dvar_dq = nf * (1.0 + q) / (1.0 - q).powi(3);
                    let se_v = (se_var * se_var + (dvar_dq * se_q).powi(2)).sqrt();
                    let z = if se_mean > 0.0 { (nf + mean_excess - expected) / se_mean } else { 0.0 };
                    let var_z = if se_v > 0.0 { (var_excess - var_formula) / se_v } else { 0.0 };
                    (expected, var_formula, z, var_z)
                } else {
                    (f64::INFINITY, f64::INFINITY, f64::NAN, f64::NAN)
                };
                rows.push(EffSizeRow {
                    d: cfg.d,
                    beta,
                    region_kind: kind.clone(),
                    rho,
                    n,
                    q,
                    q_std_error: se_q,
                    mean_n_empirical: nf + mean_excess,
                    mean_n_formula: mean_formula,
                    z_score: z,
                    var_excess_empirical: var_excess,
                    var_excess_formula: var_formula,
                    var_z_score: var_z,
                    n_replications: cfg.n_replications,
                });
            }
        }
    }
    Ok(rows)
}

pub fn effsize_csv(rows: &[EffSizeRow]) -> String {
    let mut out = String::from(
        "n,q,mean_N_empirical,mean_N_formula,z_score,d,beta,region_kind,rho,q_std_error,\
         var_excess_empirical,var_excess_formula,var_z_score,n_replications\n",
    );
    for r in rows {
        csv_line(
            &mut out,
            &[
                r.n.to_string(),
                fmt_f64(r.q),
                fmt_f64(r.mean_n_empirical),
                fmt_f64(r.mean_n_formula),
                fmt_f64(r.z_score),
                r.d.to_string(),
                fmt_f64(r.beta),
                r.region_kind.clone(),
                fmt_f64(r.rho),
                fmt_f64(r.q_std_error),
                fmt_f64(r.var_excess_empirical),
                fmt_f64(r.var_excess_formula),
                fmt_f64(r.var_z_score),
                r.n_replications.to_string(),
            ],
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCell {
    pub scenario_size: usize,
    pub mean_gap: f64,
    /// Standard error of the mean gap.
    pub std_error: f64,
    /// Half-width of the 95% interval, `1.96 · std_error`.
    pub ci95: f64,
    pub gap_samples: Vec<f64>,
    pub mean_effective_size: f64,
    /// Scenario sets discarded because the return target was unreachable.
    pub discards: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    /// Fraction of draws that were aggregated, pooled over all runs; absent
    /// for plain sampling.
    pub q_estimate: Option<f64>,
    pub cells: Vec<StabilityCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub d: usize,
    pub beta: f64,
    pub t: f64,
    pub master_seed: u64,
    pub n_replications: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub exact_optimum: f64,
    pub exact_portfolio: Vec<f64>,
    pub methods: Vec<MethodSummary>,
}

impl StabilityReport {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("method,scenario_size,mean_gap,std_error,ci95,mean_effective_size,q_estimate,discards\n");
        for m in &self.methods {
            for c in &m.cells {
                csv_line(
                    &mut out,
                    &[
                        m.method.clone(),
                        c.scenario_size.to_string(),
                        fmt_f64(c.mean_gap),
                        fmt_f64(c.std_error),
                        fmt_f64(c.ci95),
                        fmt_f64(c.mean_effective_size),
                        m.q_estimate.map(fmt_f64).unwrap_or_default(),
                        c.discards.to_string(),
                    ],
                );
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Market for the stability study: fitted to a returns file when one is
/// configured, synthetic otherwise.
pub fn stability_market(cfg: &ExperimentConfig) -> Result<Market> {
    match &cfg.returns_path {
        Some(path) => market_from_returns(path),
        None => synthetic_market(cfg.d, cfg.t, task_seed(cfg.master_seed, "market", cfg.d as u64, 0)),
    }
}

struct Replication {
    gap: f64,
    effective_size: u64,
    aggregated: usize,
    discards: usize,
}

fn replicate(
    generator: &dyn ScenarioGenerator,
    dist: &EllipticalDist,
    prob: &PortfolioProblem,
    exact: &ExactSolution,
    cfg: &ExperimentConfig,
    size: usize,
    seed: u64,
) -> Result<Replication> {
    let mut stream = SampleStream::new(dist.clone(), seed);
    let mut discards = 0;
    let mut effective_size = 0;
    loop {
        let g = generator.generate(&mut stream, size)?;
        effective_size += g.effective_sample_size;
        match solve_cvar_portfolio_with(&g.scenarios, prob.beta(), prob.target(), cfg.normalization, cfg.budget) {
            Ok(sol) => {
                let gap = frontier_gap(&sol.x, prob, exact)?;
                return Ok(Replication {
                    gap,
                    effective_size: g.effective_sample_size,
                    aggregated: g.n_aggregated,
                    discards,
                });
            }
            Err(Error::Infeasible(_)) => {
                discards += 1;
                if discards > cfg.max_discards {
                    return Err(Error::Infeasible(format!(
                        "{} consecutive scenario sets could not reach t = {} (μ = {:?}); {effective_size} draws used",
                        discards,
                        prob.target(),
                        prob.mu().as_slice()
                    )));
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Methods compared by the stability study: plain sampling plus
/// aggregation sampling with each configured region kind.
pub fn stability_methods(cfg: &ExperimentConfig) -> Vec<(String, Option<String>)> {
    let mut methods = vec![("sampling".to_string(), None)];
    for k in region_kinds(cfg, &["monotonic", "orthant"]) {
        methods.push(("aggregation-sampling".to_string(), Some(k)));
    }
    methods
}

/// Optimality gaps of scenario-based CVaR portfolios against the exact
/// Normal optimum, per method and scenario-set size.
pub fn run_stability(cfg: &ExperimentConfig) -> Result<StabilityReport> {
    cfg.validate()?;
    if cfg.family() != RadialFamily::Normal {
        return Err(Error::Domain("the stability study needs Normal returns for its exact reference".into()));
    }
    let beta = *cfg.beta.first().expect("validated non-empty");
    let market = stability_market(cfg)?;
    let d = market.mu.len();
    let prob = PortfolioProblem::new(market.mu.clone(), market.sigma.clone(), beta, cfg.t)?.with_budget(cfg.budget);
    let exact = solve_exact_normal(&prob)?;
    let dist = EllipticalDist::from_covariance(RadialFamily::Normal, market.mu.clone(), market.sigma.clone())?;
    let registry = GeneratorRegistry::with_defaults();
    check_kinds(&region_kinds(cfg, &["monotonic", "orthant"]), registry.regions())?;
    let orientation = cfg.orientation.unwrap_or(LossOrientation::Decreasing);

    let mut methods = Vec::new();
    for (method, region) in stability_methods(cfg) {
        let ctx = RegionContext::new(&dist, beta)
            .with_orientation(orientation)
            .with_survivor_samples(cfg.survivor_samples)
            .with_seed(task_seed(cfg.master_seed, &format!("region/{}", region.as_deref().unwrap_or("")), 0, 0));
        let generator = registry.build(&method, region.as_deref(), &ctx)?;
        let name = generator.name();
        let tasks: Vec<(usize, usize)> =
            cfg.scenario_sizes.iter().flat_map(|&s| (0..cfg.n_replications).map(move |r| (s, r))).collect();
        let results = tasks
            .par_iter()
            .map(|&(size, rep)| {
                let seed = task_seed(cfg.master_seed, &name, size as u64, rep as u64);
                replicate(generator.as_ref(), &dist, &prob, &exact, cfg, size, seed)
            })
            .collect::<Result<Vec<Replication>>>()?;
        let mut cells = Vec::new();
        let (mut aggregated, mut draws) = (0u64, 0u64);
        for (k, &size) in cfg.scenario_sizes.iter().enumerate() {
            let chunk = &results[k * cfg.n_replications..(k + 1) * cfg.n_replications];
            let gaps: Vec<f64> = chunk.iter().map(|r| r.gap).collect();
            let (mean, var, _) = moments(&gaps);
            let se = (var / gaps.len() as f64).sqrt();
            aggregated += chunk.iter().map(|r| r.aggregated as u64).sum::<u64>();
            draws += chunk.iter().map(|r| r.effective_size).sum::<u64>();
            cells.push(StabilityCell {
                scenario_size: size,
                mean_gap: mean,
                std_error: se,
                ci95: Z_95 * se,
                mean_effective_size: chunk.iter().map(|r| r.effective_size as f64).sum::<f64>() / chunk.len() as f64,
                discards: chunk.iter().map(|r| r.discards).sum(),
                gap_samples: gaps,
            });
        }
        let q_estimate = region.as_ref().map(|_| aggregated as f64 / draws as f64);
        methods.push(MethodSummary { method: name, q_estimate, cells });
    }
    Ok(StabilityReport {
        d,
        beta,
        t: cfg.t,
        master_seed: cfg.master_seed,
        n_replications: cfg.n_replications,
        mu: market.mu.as_slice().to_vec(),
        sigma: (0..d).map(|i| (0..d).map(|j| market.sigma[(i, j)]).collect()).collect(),
        exact_optimum: exact.value,
        exact_portfolio: exact.x,
        methods,
    })
}

/// `<dir>/<experiment>_<seed>.csv` and `.json`.
pub fn output_paths(dir: &Path, kind: ExperimentKind, seed: u64) -> (PathBuf, PathBuf) {
    let stem = format!("{}_{seed}", kind.file_stem());
    (dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.json")))
}

/// JSON summary shared by the row-based experiments.
pub fn rows_json<T: Serialize>(cfg: &ExperimentConfig, kind: ExperimentKind, rows: &[T]) -> String {
    #[derive(Serialize)]
    struct Summary<'a, T> {
        experiment: ExperimentKind,
        config: &'a ExperimentConfig,
        rows: &'a [T],
    }
    let mut s = serde_json::to_string_pretty(&Summary { experiment: kind, config: cfg, rows }).expect("rows serialize");
    let _ = writeln!(s);
    s
}
