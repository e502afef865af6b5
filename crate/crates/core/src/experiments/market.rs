use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Mean vector and covariance matrix of asset returns.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

const VOL_RANGE: (f64, f64) = (0.04, 0.10);
const MEAN_RANGE: (f64, f64) = (0.0, 0.02);
const MAX_RESAMPLES: usize = 1000;

/// Seeded synthetic monthly market: correlations from unit-normalized
/// random factor loadings, volatilities in `[0.04, 0.10]` and means in
/// `[0, 0.02]`. Means are redrawn until some asset exceeds `t`, so the
/// budget-constrained problem is feasible.
pub fn synthetic_market(d: usize, t: f64, seed: u64) -> Result<Market> {
    if d == 0 {
        return Err(Error::Domain("market dimension must be at least 1".into()));
    }
    if t >= MEAN_RANGE.1 {
        return Err(Error::Domain(format!(
            "target return {t} is not below the largest synthetic mean {}",
            MEAN_RANGE.1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Common factors plus one idiosyncratic factor per asset keep the
    // correlation matrix well conditioned.
    let k = d.div_ceil(2);
    let mut w = DMatrix::from_fn(d, k + d, |i, j| {
        if j < k {
            rng.sample::<f64, _>(StandardNormal)
        } else if j - k == i {
            1.0
        } else {
            0.0
        }
    });
    for mut row in w.row_iter_mut() {
        let n = row.norm();
        row /= n;
    }
    let corr = &w * w.transpose();
    let vols = DVector::from_fn(d, |_, _| rng.random_range(VOL_RANGE.0..VOL_RANGE.1));
    let sigma = DMatrix::from_fn(d, d, |i, j| {
        let c = if i == j { 1.0 } else { corr[(i, j)] };
        vols[i] * vols[j] * c
    });
    if sigma.clone().cholesky().is_none() {
        return Err(Error::Singular("synthetic covariance is not positive definite".into()));
    }
    for _ in 0..MAX_RESAMPLES {
        let mu = DVector::from_fn(d, |_, _| rng.random_range(MEAN_RANGE.0..MEAN_RANGE.1));
        if mu.max() > t {
            return Ok(Market { mu, sigma });
        }
    }
    Err(Error::Infeasible(format!("could not draw means exceeding target {t}")))
}

/// Sample mean and covariance (divisor `n − 1`) of a returns table whose
/// first row holds asset names and whose remaining rows hold returns.
pub fn market_from_returns_str(text: &str) -> Result<Market> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let d = reader.headers()?.len();
    if d == 0 {
        return Err(Error::Parse("returns file has no asset columns".into()));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != d {
            return Err(Error::Parse(format!("returns row {} has {} fields, expected {d}", k + 2, rec.len())));
        }
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| Error::Parse(format!("row {}: `{f}` is not a number", k + 2))))
            .collect::<Result<Vec<f64>>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("row {} has non-finite returns", k + 2)));
        }
        rows.push(row);
    }
    let n = rows.len();
    if n < d + 1 {
        return Err(Error::Domain(format!("need more than {d} return rows to fit a {d}-asset covariance, got {n}")));
    }
    let mu = DVector::from_fn(d, |j, _| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64);
    let sigma = DMatrix::from_fn(d, d, |i, j| {
        rows.iter().map(|r| (r[i] - mu[i]) * (r[j] - mu[j])).sum::<f64>() / (n - 1) as f64
    });
    if sigma.clone().cholesky().is_none() {
        return Err(Error::Singular("sample covariance of the returns is not positive definite".into()));
    }
    Ok(Market { mu, sigma })
}

pub fn market_from_returns(path: impl AsRef<Path>) -> Result<Market> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    market_from_returns_str(&text)
}
