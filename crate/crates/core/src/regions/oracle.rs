use crate::error::{check_dim, Error, Result};
use crate::generation::aggregate_discrete;
use crate::scenario::{accurate_sum, ScenarioSet};
use crate::tail_risk::{cvar_discrete, var_discrete, LossSample, Normalization};

/// Agreement tolerance for tail measures before and after aggregation.
pub const TAIL_CHECK_TOL: f64 = 1e-10;

/// Loss `f(x, y)` of decision `x` under outcome `y`.
pub trait LossFunction: Sync {
    fn loss(&self, decision: &[f64], outcome: &[f64]) -> f64;
}

impl<F: Fn(&[f64], &[f64]) -> f64 + Sync> LossFunction for F {
    fn loss(&self, decision: &[f64], outcome: &[f64]) -> f64 {
        self(decision, outcome)
    }
}

/// Portfolio loss `−xᵀy`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PortfolioLoss;

impl LossFunction for PortfolioLoss {
    fn loss(&self, decision: &[f64], outcome: &[f64]) -> f64 {
        -accurate_sum(decision.iter().zip(outcome).map(|(a, b)| a * b))
    }
}

fn loss_sample(scens: &ScenarioSet, loss: &dyn LossFunction, x: &[f64]) -> Result<LossSample> {
    LossSample::from_scenarios(scens, |y| loss.loss(x, y))
}

/// Marks every scenario that reaches the β-quantile of the loss for at
/// least one decision in `grid`.
pub fn discrete_risk_region_oracle(
    scens: &ScenarioSet,
    loss: &dyn LossFunction,
    grid: &[Vec<f64>],
    beta: f64,
) -> Result<Vec<bool>> {
    if grid.is_empty() {
        return Err(Error::Domain("decision grid is empty".into()));
    }
    let mut mask = vec![false; scens.len()];
    for x in grid {
        let sample = loss_sample(scens, loss, x)?;
        let var = var_discrete(&sample, beta)?;
        for (m, l) in mask.iter_mut().zip(sample.losses()) {
            *m |= *l >= var;
        }
    }
    Ok(mask)
}

/// Outcome of [`check_aggregation_preserves_tail`].
#[derive(Debug, Clone, PartialEq)]
pub struct TailCheck {
    pub preserved: bool,
    /// Index into the grid of the first decision whose tail changed.
    pub first_violation: Option<usize>,
    pub max_abs_diff: f64,
}

/// Aggregates the scenarios outside `mask` and compares VaR and CVaR (both
/// normalizations) before and after for every decision in `grid`.
pub fn check_aggregation_preserves_tail(
    scens: &ScenarioSet,
    loss: &dyn LossFunction,
    grid: &[Vec<f64>],
    beta: f64,
    mask: &[bool],
) -> Result<TailCheck> {
    check_dim(scens.len(), mask.len())?;
    let aggregated = aggregate_discrete(scens, mask)?;
    let mut first_violation = None;
    let mut max_abs_diff = 0.0f64;
    for (k, x) in grid.iter().enumerate() {
        let before = loss_sample(scens, loss, x)?;
        let after = loss_sample(&aggregated, loss, x)?;
        let pairs = [
            (var_discrete(&before, beta)?, var_discrete(&after, beta)?),
            (
                cvar_discrete(&before, beta, Normalization::PaperUnnormalized)?,
                cvar_discrete(&after, beta, Normalization::PaperUnnormalized)?,
            ),
            (
                cvar_discrete(&before, beta, Normalization::Standard)?,
                cvar_discrete(&after, beta, Normalization::Standard)?,
            ),
        ];
        for (a, b) in pairs {
            let diff = (a - b).abs();
            max_abs_diff = max_abs_diff.max(diff);
            if diff > TAIL_CHECK_TOL && first_violation.is_none() {
                first_violation = Some(k);
            }
        }
    }
    Ok(TailCheck { preserved: first_violation.is_none(), first_violation, max_abs_diff })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(values: &[f64]) -> ScenarioSet {
        ScenarioSet::equiprobable(values.iter().map(|v| vec![*v]).collect()).unwrap()
    }

    #[test]
    fn oracle_examples() {
        // Loss = y for the single decision x = 1.
        let scens = line(&[1.0, 2.0, 3.0, 4.0]);
        let loss = |x: &[f64], y: &[f64]| x[0] * y[0];
        let mask = discrete_risk_region_oracle(&scens, &loss, &[vec![1.0]], 0.7).unwrap();
        assert_eq!(mask, [false, false, true, true]);
        let mask = discrete_risk_region_oracle(&scens, &loss, &[vec![1.0]], 0.999).unwrap();
        assert_eq!(mask, [false, false, false, true]);
        let both = discrete_risk_region_oracle(&scens, &loss, &[vec![1.0], vec![-1.0]], 0.7).unwrap();
        assert_eq!(both, [true, true, true, true]);
    }

    #[test]
    fn check_detects_dropped_tail_point() {
        let scens = ScenarioSet::new(
            vec![vec![0.1, -0.3], vec![-0.2, 0.1], vec![0.05, 0.02], vec![0.3, 0.2], vec![-0.4, -0.1], vec![0.0, 0.25]],
            vec![1.0 / 6.0; 6],
        )
        .unwrap();
        let grid = vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]];
        let mask = discrete_risk_region_oracle(&scens, &PortfolioLoss, &grid, 0.6).unwrap();
        let ok = check_aggregation_preserves_tail(&scens, &PortfolioLoss, &grid, 0.6, &mask).unwrap();
        assert!(ok.preserved, "{ok:?}");
        let all = vec![true; 6];
        assert!(check_aggregation_preserves_tail(&scens, &PortfolioLoss, &grid, 0.6, &all).unwrap().preserved);
        let i = mask.iter().position(|m| *m).unwrap();
        let mut dropped = mask.clone();
        dropped[i] = false;
        let bad = check_aggregation_preserves_tail(&scens, &PortfolioLoss, &grid, 0.6, &dropped).unwrap();
        assert!(!bad.preserved);
        assert!(bad.first_violation.is_some());
    }
}
