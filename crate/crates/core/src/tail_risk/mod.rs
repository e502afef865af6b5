//! VaR and CVaR of discrete loss distributions, the CVaR-minimization
//! linear program and the exact Normal portfolio problem.

pub mod lp;
mod portfolio;

use serde::{Deserialize, Serialize};

pub use portfolio::{
    cvar_normal_analytic, frontier_gap, optimality_gap, portfolio_losses, solve_cvar_portfolio,
    solve_cvar_portfolio_with, solve_exact_normal, CvarSolution, ExactSolution, PortfolioProblem, EXACT_GAP_TOL,
    GAP_CLAMP_TOL,
};

use crate::error::{check_dim, check_probability_open, Error, Result};
use crate::scenario::{accurate_sum, ScenarioSet, PROB_SUM_TOL};

/// Slack allowed when comparing a cumulative probability with β, so that
/// rounding in the cumulative sum does not skip an atom that reaches β
/// exactly.
pub const QUANTILE_TOL: f64 = 1e-12;

/// CVaR scaling convention.
///
/// `PaperUnnormalized` is `∫_β^1 F⁻¹(u) du`; `Standard` divides that by
/// `1 − β` and is the conditional tail expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    PaperUnnormalized,
    Standard,
}

impl Normalization {
    pub fn scale(self, unnormalized: f64, beta: f64) -> f64 {
        match self {
            Self::PaperUnnormalized => unnormalized,
            Self::Standard => unnormalized / (1.0 - beta),
        }
    }
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_unnormalized" | "paper-unnormalized" | "unnormalized" => Ok(Self::PaperUnnormalized),
            "standard" => Ok(Self::Standard),
            other => Err(Error::Parse(format!("unknown CVaR normalization `{other}`"))),
        }
    }
}

/// A finite loss distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSample {
    losses: Vec<f64>,
    probs: Vec<f64>,
}

impl LossSample {
    pub fn new(losses: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        check_dim(losses.len(), probs.len())?;
        if losses.is_empty() {
            return Err(Error::Domain("loss sample is empty".into()));
        }
        if losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::Domain("losses must be finite".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Domain("probabilities must be finite and ≥ 0".into()));
        }
        let total = accurate_sum(probs.iter().copied());
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::Domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { losses, probs })
    }

    pub fn equiprobable(losses: Vec<f64>) -> Result<Self> {
        let n = losses.len();
        Self::new(losses, vec![1.0 / n.max(1) as f64; n])
    }

    /// Losses `loss(yᵢ)` with the scenario probabilities.
    pub fn from_scenarios(scens: &ScenarioSet, loss: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Self::new(scens.points().map(loss).collect(), scens.probs().to_vec())
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn mean(&self) -> f64 {
        accurate_sum(self.losses.iter().zip(&self.probs).map(|(l, p)| l * p))
    }

    fn sorted_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.losses[a].total_cmp(&self.losses[b]));
        order
    }

    /// Position in `order` of the β-quantile atom.
    fn quantile_position(&self, order: &[usize], beta: f64) -> usize {
        let mut cum = 0.0;
        let mut comp = 0.0;
        for (k, &i) in order.iter().enumerate() {
            // Neumaier step, inlined to keep the running total.
            let v = self.probs[i];
            let t = cum + v;
            comp += if cum.abs() >= v.abs() { (cum - t) + v } else { (v - t) + cum };
            cum = t;
            if cum + comp >= beta - QUANTILE_TOL {
                return k;
            }
        }
        order.len() - 1
    }
}

/// `inf{z : F(z) ≥ β}`.
pub fn var_discrete(sample: &LossSample, beta: f64) -> Result<f64> {
    check_probability_open(beta, "beta")?;
    let order = sample.sorted_order();
    Ok(sample.losses[order[sample.quantile_position(&order, beta)]])
}

/// CVaR as the exact integral of the step quantile function over `[β, 1]`.
pub fn cvar_discrete(sample: &LossSample, beta: f64, normalization: Normalization) -> Result<f64> {
    check_probability_open(beta, "beta")?;
    let order = sample.sorted_order();
    let k = sample.quantile_position(&order, beta);
    let tail = &order[k + 1..];
    let mass_above = accurate_sum(tail.iter().map(|&i| sample.probs[i]));
    let var = sample.losses[order[k]];
    let weight_at_var = ((1.0 - beta) - mass_above).max(0.0);
    let integral = accurate_sum(
        tail.iter().map(|&i| sample.probs[i] * sample.losses[i]).chain(std::iter::once(weight_at_var * var)),
    );
    Ok(normalization.scale(integral, beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `min_α (1−β)α + Σ pᵢ(lᵢ − α)₊`; piecewise linear and convex in α, so
    /// the minimum is attained at one of the losses.
    fn ru_minimum(s: &LossSample, beta: f64) -> f64 {
        s.losses()
            .iter()
            .map(|&a| {
                (1.0 - beta) * a + s.losses().iter().zip(s.probs()).map(|(l, p)| p * (l - a).max(0.0)).sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn quartet() -> LossSample {
        LossSample::equiprobable(vec![3.0, 1.0, 4.0, 2.0]).unwrap()
    }

    #[test]
    fn var_examples() {
        let s = quartet();
        assert_eq!(var_discrete(&s, 0.5).unwrap(), 2.0);
        assert_eq!(var_discrete(&s, 0.75).unwrap(), 3.0);
        assert_eq!(var_discrete(&s, 0.76).unwrap(), 4.0);
        let one = LossSample::equiprobable(vec![-7.5]).unwrap();
        for b in [1e-9, 0.3, 0.999] {
            assert_eq!(var_discrete(&one, b).unwrap(), -7.5);
        }
    }

    #[test]
    fn cvar_examples() {
        let s = quartet();
        assert!((cvar_discrete(&s, 0.75, Normalization::PaperUnnormalized).unwrap() - 1.0).abs() < 1e-15);
        assert!((cvar_discrete(&s, 0.75, Normalization::Standard).unwrap() - 4.0).abs() < 1e-14);
        let mean = s.mean();
        assert!((cvar_discrete(&s, 1e-9, Normalization::Standard).unwrap() - mean).abs() < 1e-6);
        // β inside an atom: ∫_{0.6}^{0.75} 3 + 0.25·4.
        let v = cvar_discrete(&s, 0.6, Normalization::PaperUnnormalized).unwrap();
        assert!((v - (0.15 * 3.0 + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(LossSample::new(vec![1.0], vec![0.5]).is_err());
        assert!(LossSample::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(var_discrete(&quartet(), 1.0).is_err());
    }

    fn sample_strategy() -> impl Strategy<Value = LossSample> {
        prop::collection::vec((-10.0f64..10.0, 0.01f64..1.0), 1..25).prop_map(|v| {
            let total: f64 = v.iter().map(|(_, w)| w).sum();
            let probs: Vec<f64> = v.iter().map(|(_, w)| w / total).collect();
            let fix = 1.0 - accurate_sum(probs.iter().copied());
            let mut probs = probs;
            probs[0] += fix;
            LossSample::new(v.iter().map(|(l, _)| *l).collect(), probs).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn ru_minimum_matches(s in sample_strategy(), beta in 0.01f64..0.99) {
            let c = cvar_discrete(&s, beta, Normalization::PaperUnnormalized).unwrap();
            prop_assert!((c - ru_minimum(&s, beta)).abs() < 1e-10);
        }

        #[test]
        fn translation(s in sample_strategy(), beta in 0.01f64..0.99, c in -5.0f64..5.0) {
            let shifted = LossSample::new(s.losses().iter().map(|l| l + c).collect(), s.probs().to_vec()).unwrap();
            let u0 = cvar_discrete(&s, beta, Normalization::PaperUnnormalized).unwrap();
            let u1 = cvar_discrete(&shifted, beta, Normalization::PaperUnnormalized).unwrap();
            prop_assert!((u1 - u0 - c * (1.0 - beta)).abs() < 1e-10);
            let s0 = cvar_discrete(&s, beta, Normalization::Standard).unwrap();
            let s1 = cvar_discrete(&shifted, beta, Normalization::Standard).unwrap();
            prop_assert!((s1 - s0 - c).abs() < 1e-9);
        }

        #[test]
        fn homogeneity(s in sample_strategy(), beta in 0.01f64..0.99, lambda in 0.01f64..20.0) {
            let scaled = LossSample::new(s.losses().iter().map(|l| l * lambda).collect(), s.probs().to_vec()).unwrap();
            for norm in [Normalization::PaperUnnormalized, Normalization::Standard] {
                let a = cvar_discrete(&scaled, beta, norm).unwrap();
                let b = lambda * cvar_discrete(&s, beta, norm).unwrap();
                prop_assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
            }
            let v = var_discrete(&scaled, beta).unwrap();
            prop_assert!((v - lambda * var_discrete(&s, beta).unwrap()).abs() < 1e-12 * (1.0 + v.abs()));
        }

        /// Merging all atoms strictly below the β-quantile into one atom
        /// anywhere below it leaves the tail unchanged.
        #[test]
        fn tail_equivalence(s in sample_strategy(), beta in 0.05f64..0.95, drop in 0.0f64..3.0) {
            let var = var_discrete(&s, beta).unwrap();
            let mut losses = Vec::new();
            let mut probs = Vec::new();
            let mut below_mass = 0.0;
            let mut below_min = f64::INFINITY;
            for (&l, &p) in s.losses().iter().zip(s.probs()) {
                if l < var {
                    below_mass += p;
                    below_min = below_min.min(l);
                } else {
                    losses.push(l);
                    probs.push(p);
                }
            }
            if below_mass > 0.0 {
                losses.push(below_min - drop);
                probs.push(below_mass);
            }
            let t = LossSample::new(losses, probs).unwrap();
            prop_assert_eq!(var_discrete(&t, beta).unwrap(), var);
            for norm in [Normalization::PaperUnnormalized, Normalization::Standard] {
                let a = cvar_discrete(&s, beta, norm).unwrap();
                let b = cvar_discrete(&t, beta, norm).unwrap();
                prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }
}
