use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::distributions::{RadialFamily, DEFAULT_SURVIVOR_SAMPLES};
use crate::error::{Error, Result};
use crate::regions::LossOrientation;
use crate::tail_risk::Normalization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ProbCurves,
    StabilityStudy,
    EffSizeCheck,
}

impl ExperimentKind {
    /// Stem of the output file names.
    pub fn file_stem(self) -> &'static str {
        match self {
            Self::ProbCurves => "prob_curves",
            Self::StabilityStudy => "stability",
            Self::EffSizeCheck => "effsize",
        }
    }
}

/// Accepts either a single number or a list.
fn one_or_many<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

fn default_d() -> usize {
    5
}
fn default_beta() -> Vec<f64> {
    vec![0.95]
}
fn default_rho() -> Vec<f64> {
    vec![0.0]
}
fn default_replications() -> usize {
    50
}
fn default_sizes() -> Vec<usize> {
    vec![50, 100, 200, 500, 1000]
}
fn default_t() -> f64 {
    0.01
}
fn default_mc_samples() -> usize {
    200_000
}
fn default_survivor_samples() -> usize {
    DEFAULT_SURVIVOR_SAMPLES
}
fn default_n_risk() -> usize {
    500
}
fn default_max_discards() -> usize {
    100
}
fn default_true() -> bool {
    true
}

/// Parameters of one experiment run. Every report is a pure function of
/// this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    #[serde(default = "default_d")]
    pub d: usize,
    /// Largest dimension swept by the probability curves.
    #[serde(default)]
    pub d_max: Option<usize>,
    #[serde(default = "default_beta", deserialize_with = "one_or_many")]
    pub beta: Vec<f64>,
    /// Equicorrelation of the Normal model used by the probability curves
    /// and the effective-size check.
    #[serde(default = "default_rho", deserialize_with = "one_or_many")]
    pub rho: Vec<f64>,
    /// Monthly returns CSV used to fit μ and Σ instead of the synthetic
    /// market.
    #[serde(default)]
    pub returns_path: Option<PathBuf>,
    /// Region kinds to compare; each experiment has its own default.
    #[serde(default)]
    pub region_kinds: Option<Vec<String>>,
    #[serde(default = "default_replications")]
    pub n_replications: usize,
    #[serde(default = "default_sizes")]
    pub scenario_sizes: Vec<usize>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_survivor_samples")]
    pub survivor_samples: usize,
    /// Risk scenarios per run of the effective-size check.
    #[serde(default = "default_n_risk")]
    pub n_risk: usize,
    #[serde(default)]
    pub orientation: Option<LossOrientation>,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default = "default_true")]
    pub budget: bool,
    #[serde(default)]
    pub family: Option<RadialFamily>,
    #[serde(default = "default_max_discards")]
    pub max_discards: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn family(&self) -> RadialFamily {
        self.family.unwrap_or(RadialFamily::Normal)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if self.d_max == Some(0) {
            return bad("d_max must be at least 1".into());
        }
        if self.beta.is_empty() {
            return bad("beta list is empty".into());
        }
        for &b in &self.beta {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("beta must lie in (0, 1), got {b}"));
            }
        }
        for &r in &self.rho {
            if !(r.is_finite() && r > -1.0 && r < 1.0) {
                return bad(format!("rho must lie in (−1, 1), got {r}"));
            }
        }
        if self.n_replications < 2 {
            return bad("n_replications must be at least 2".into());
        }
        if self.scenario_sizes.is_empty() || self.scenario_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("scenario_sizes must be non-empty and strictly increasing".into());
        }
        if self.scenario_sizes[0] < 2 {
            return bad("scenario sizes must be at least 2".into());
        }
        if !self.t.is_finite() {
            return bad("t must be finite".into());
        }
        if self.mc_samples == 0 || self.n_risk == 0 {
            return bad("mc_samples and n_risk must be positive".into());
        }
        if let Some(RadialFamily::StudentT { dof }) = self.family {
            if !(dof.is_finite() && dof > 0.0) {
                return bad(format!("Student-t degrees of freedom must be positive, got {dof}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_scalar_or_list() {
        let c = ExperimentConfig::default();
        assert_eq!(c.n_replications, 50);
        assert_eq!(c.t, 0.01);
        assert_eq!(c.beta, vec![0.95]);
        c.validate().unwrap();
        let c = ExperimentConfig::from_json_str(r#"{"beta": 0.99, "rho": [0.0, 0.5]}"#).unwrap();
        assert_eq!(c.beta, vec![0.99]);
        assert_eq!(c.rho, vec![0.0, 0.5]);
        let c = ExperimentConfig::from_json_str(r#"{"experiment": "stability_study", "beta": [0.9, 0.95]}"#).unwrap();
        assert_eq!(c.experiment, Some(ExperimentKind::StabilityStudy));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(ExperimentConfig::from_json_str(r#"{"bogus": 1}"#), Err(Error::Parse(_))));
        for json in [r#"{"beta": 1.0}"#, r#"{"n_replications": 1}"#, r#"{"scenario_sizes": [100, 50]}"#, r#"{"d": 0}"#]
        {
            let c = ExperimentConfig::from_json_str(json).unwrap();
            assert!(c.validate().is_err(), "{json}");
        }
    }

    #[test]
    fn round_trips_through_json() {
        let c = ExperimentConfig { d_max: Some(3), master_seed: 11, ..Default::default() };
        assert_eq!(ExperimentConfig::from_json_str(&c.to_json()).unwrap(), c);
    }
}
