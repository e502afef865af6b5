use super::elliptical::EllipticalDist;
use super::special::{std_normal_cdf, std_normal_sf};
use super::stream::SampleStream;
use crate::error::{check_dim, Result};

/// Default common-random-number sample size for correlated components.
pub const DEFAULT_SURVIVOR_SAMPLES: usize = 200_000;

/// Orthant probabilities `Prob{Y > y}` and `Prob{Y < y}` (element-wise).
///
/// Independent Normal components use the exact product of marginals.
/// Otherwise a fixed sample of size `m` is drawn once and reused for every
/// query, so the estimate is a deterministic function of `y`.
#[derive(Debug, Clone)]
pub enum SurvivorEstimator {
    ExactProduct { mu: Vec<f64>, scale: Vec<f64> },
    MonteCarlo(CrnSample),
}

/// A common-random-number sample stored row-major and sorted by its first
/// coordinate so orthant counts only scan the relevant prefix or suffix.
#[derive(Debug, Clone)]
pub struct CrnSample {
    dim: usize,
    first: Vec<f64>,
    rows: Vec<f64>,
}

impl CrnSample {
    pub fn draw(dist: &EllipticalDist, m: usize, seed: u64) -> Self {
        let d = dist.dim();
        let m = m.max(1);
        let mut stream = SampleStream::new(dist.clone(), seed);
        let mut flat = vec![0.0; m * d];
        for row in flat.chunks_mut(d) {
            stream.draw_into(row);
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| flat[a * d].total_cmp(&flat[b * d]));
        let mut rows = Vec::with_capacity(m * d);
        for &i in &order {
            rows.extend_from_slice(&flat[i * d..(i + 1) * d]);
        }
        let first = order.iter().map(|&i| flat[i * d]).collect();
        Self { dim: d, first, rows }
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// `#{i : Yᵢ > y}`, stopping early once the count exceeds `limit`.
    pub fn count_above(&self, y: &[f64], limit: usize) -> usize {
        let start = self.first.partition_point(|&v| v <= y[0]);
        let mut count = 0;
        for i in start..self.len() {
            if self.row(i)[1..].iter().zip(&y[1..]).all(|(a, b)| a > b) {
                count += 1;
                if count > limit {
                    break;
                }
            }
        }
        count
    }

    /// `#{i : Yᵢ < y}`, stopping early once the count exceeds `limit`.
    pub fn count_below(&self, y: &[f64], limit: usize) -> usize {
        let end = self.first.partition_point(|&v| v < y[0]);
        let mut count = 0;
        for i in 0..end {
            if self.row(i)[1..].iter().zip(&y[1..]).all(|(a, b)| a < b) {
                count += 1;
                if count > limit {
                    break;
                }
            }
        }
        count
    }
}

impl SurvivorEstimator {
    /// Exact product rule for independent Normal components, CRN Monte Carlo
    /// otherwise.
    pub fn new(dist: &EllipticalDist, m: usize, seed: u64) -> Self {
        if dist.has_independent_components() {
            let d = dist.dim();
            let scale = (0..d).map(|i| dist.p()[(i, i)].abs()).collect();
            Self::ExactProduct { mu: dist.mu().iter().copied().collect(), scale }
        } else {
            Self::monte_carlo(dist, m, seed)
        }
    }

    pub fn monte_carlo(dist: &EllipticalDist, m: usize, seed: u64) -> Self {
        Self::MonteCarlo(CrnSample::draw(dist, m, seed))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::ExactProduct { mu, .. } => mu.len(),
            Self::MonteCarlo(s) => s.dim,
        }
    }

    /// `Prob{Y > y}`.
    pub fn survivor(&self, y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), y.len())?;
        Ok(match self {
            Self::ExactProduct { mu, scale } => {
                y.iter().zip(mu.iter().zip(scale)).map(|(yi, (m, s))| std_normal_sf((yi - m) / s)).product()
            }
            Self::MonteCarlo(s) => s.count_above(y, usize::MAX) as f64 / s.len() as f64,
        })
    }

    /// `Prob{Y < y}`.
    pub fn lower_orthant(&self, y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), y.len())?;
        Ok(match self {
            Self::ExactProduct { mu, scale } => {
                y.iter().zip(mu.iter().zip(scale)).map(|(yi, (m, s))| std_normal_cdf((yi - m) / s)).product()
            }
            Self::MonteCarlo(s) => s.count_below(y, usize::MAX) as f64 / s.len() as f64,
        })
    }

    /// `Prob{Y > y} ≤ level`, with early exit for the Monte Carlo path.
    pub fn survivor_at_most(&self, y: &[f64], level: f64) -> Result<bool> {
        match self {
            Self::ExactProduct { .. } => Ok(self.survivor(y)? <= level),
            Self::MonteCarlo(s) => {
                check_dim(s.dim, y.len())?;
                let limit = count_limit(level, s.len());
                Ok(s.count_above(y, limit) <= limit)
            }
        }
    }

    /// `Prob{Y < y} ≤ level`, with early exit for the Monte Carlo path.
    pub fn lower_orthant_at_most(&self, y: &[f64], level: f64) -> Result<bool> {
        match self {
            Self::ExactProduct { .. } => Ok(self.lower_orthant(y)? <= level),
            Self::MonteCarlo(s) => {
                check_dim(s.dim, y.len())?;
                let limit = count_limit(level, s.len());
                Ok(s.count_below(y, limit) <= limit)
            }
        }
    }
}

// Largest count c with c / m ≤ level.
fn count_limit(level: f64, m: usize) -> usize {
    let raw = (level * m as f64).floor();
    if raw < 0.0 {
        return 0;
    }
    let mut c = raw as usize;
    while c > 0 && c as f64 / m as f64 > level {
        c -= 1;
    }
    while ((c + 1) as f64 / m as f64) <= level && c < m {
        c += 1;
    }
    c
}

/// `(1/m)·#{i : Yᵢ > y}` for a sample of size `m`, or the exact product of
/// marginal survivors when the components are independent Normals.
pub fn survivor_estimate(dist: &EllipticalDist, y: &[f64], m: usize, seed: u64) -> Result<f64> {
    SurvivorEstimator::new(dist, m, seed).survivor(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_at_origin() {
        let dist = EllipticalDist::standard_normal(2).unwrap();
        assert_eq!(survivor_estimate(&dist, &[0.0, 0.0], 10, 1).unwrap(), 0.25);
    }

    #[test]
    fn degenerate_coordinate_gives_marginal() {
        let dist = EllipticalDist::standard_normal(2).unwrap();
        let est = SurvivorEstimator::new(&dist, 10, 1);
        let s = est.survivor(&[f64::NEG_INFINITY, 1.0]).unwrap();
        assert!((s - std_normal_sf(1.0)).abs() < 1e-15);
        let mc = SurvivorEstimator::monte_carlo(&dist, 100_000, 4);
        let s_mc = mc.survivor(&[f64::NEG_INFINITY, 1.0]).unwrap();
        assert!((s_mc - std_normal_sf(1.0)).abs() < 4.0 * (0.16 * 0.84 / 1e5f64).sqrt());
    }

    #[test]
    fn correlated_estimate_reproduces_with_fresh_sample() {
        let dist = EllipticalDist::equicorrelated_normal(2, 0.3).unwrap();
        let m = 100_000;
        let a = survivor_estimate(&dist, &[0.0, 0.0], m, 17).unwrap();
        let b = SurvivorEstimator::monte_carlo(&dist, m, 9_999).survivor(&[0.0, 0.0]).unwrap();
        let se = (a * (1.0 - a) / m as f64).sqrt();
        assert!((a - b).abs() <= 3.0 * se, "a={a} b={b} se={se}");
        // Exact value for bivariate Normal at the origin: 1/4 + asin(ρ)/(2π).
        let exact = 0.25 + 0.3f64.asin() / (2.0 * std::f64::consts::PI);
        assert!((a - exact).abs() <= 4.0 * se);
    }

    #[test]
    fn exact_and_mc_agree_for_independent_components() {
        let dist = EllipticalDist::standard_normal(3).unwrap();
        let exact = SurvivorEstimator::new(&dist, 0, 0);
        let m = 200_000;
        let mc = SurvivorEstimator::monte_carlo(&dist, m, 23);
        for y in [[0.0, 0.0, 0.0], [-0.5, 0.3, 1.0], [1.0, -1.0, -2.0]] {
            let e = exact.survivor(&y).unwrap();
            let s = mc.survivor(&y).unwrap();
            assert!((e - s).abs() <= 4.0 * (e * (1.0 - e) / m as f64).sqrt());
            let el = exact.lower_orthant(&y).unwrap();
            let sl = mc.lower_orthant(&y).unwrap();
            assert!((el - sl).abs() <= 4.0 * (el * (1.0 - el) / m as f64).sqrt());
        }
    }

    #[test]
    fn early_exit_matches_full_count() {
        let dist = EllipticalDist::equicorrelated_normal(3, 0.5).unwrap();
        let est = SurvivorEstimator::monte_carlo(&dist, 20_000, 5);
        for y in [[0.0, 0.0, 0.0], [1.0, 1.2, 0.8], [2.0, 2.0, 2.0], [-1.0, -1.0, -1.0]] {
            for level in [0.0, 0.01, 0.05, 0.3] {
                assert_eq!(est.survivor_at_most(&y, level).unwrap(), est.survivor(&y).unwrap() <= level);
                assert_eq!(est.lower_orthant_at_most(&y, level).unwrap(), est.lower_orthant(&y).unwrap() <= level);
            }
        }
    }

    #[test]
    fn count_limit_edges() {
        assert_eq!(count_limit(0.05, 100), 5);
        assert_eq!(count_limit(0.0, 100), 0);
        assert_eq!(count_limit(1.0, 100), 100);
        assert_eq!(count_limit(0.049_999, 100), 4);
    }
}
