//! Finite discrete distributions (scenario sets) and their CSV form.
//!
//! The CSV layout is a header `p,y1,...,yd` followed by one row per
//! scenario. Probabilities are written with 17 significant digits and
//! coordinates with the shortest representation that round-trips.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{check_dim, Error, Result};

/// Tolerance on the total probability of a scenario set.
pub const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    dim: usize,
    points: Vec<f64>,
    probs: Vec<f64>,
}

/// Compensated (Neumaier) summation.
pub fn accurate_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl ScenarioSet {
    pub fn new(points: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        let dim = points.first().map(Vec::len).ok_or_else(|| Error::Domain("scenario set is empty".into()))?;
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in &points {
            check_dim(dim, p.len())?;
            flat.extend_from_slice(p);
        }
        Self::from_flat(dim, flat, probs)
    }

    pub fn from_flat(dim: usize, points: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if dim == 0 || probs.is_empty() {
            return Err(Error::Domain("scenario set must have dimension ≥ 1 and at least one scenario".into()));
        }
        check_dim(probs.len() * dim, points.len())?;
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("scenario coordinates must be finite".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Domain("scenario probabilities must be finite and ≥ 0".into()));
        }
        let total = accurate_sum(probs.iter().copied());
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::Domain(format!("scenario probabilities sum to {total:.17}, not 1")));
        }
        Ok(Self { dim, points, probs })
    }

    /// Each point with probability `1/n`.
    pub fn equiprobable(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.dim)
    }

    /// `(probability, point)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.probs.iter().copied().zip(self.points.chunks(self.dim))
    }

    pub fn total_probability(&self) -> f64 {
        accurate_sum(self.probs.iter().copied())
    }

    /// `Σ pᵢ yᵢ`.
    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim).map(|j| accurate_sum(self.iter().map(|(p, y)| p * y[j]))).collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("p");
        for j in 1..=self.dim {
            let _ = write!(out, ",y{j}");
        }
        out.push('\n');
        for (p, y) in self.iter() {
            let _ = write!(out, "{p:.16e}");
            for v in y {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(s.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.is_empty() || &headers[0] != "p" {
            return Err(Error::Parse("scenario CSV must start with a `p` column".into()));
        }
        for (j, h) in headers.iter().enumerate().skip(1) {
            if h != format!("y{j}") {
                return Err(Error::Parse(format!("unexpected header `{h}` at column {j}")));
            }
        }
        let dim = headers.len() - 1;
        let mut probs = Vec::new();
        let mut points = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != dim + 1 {
                return Err(Error::Parse(format!("row has {} fields, expected {}", rec.len(), dim + 1)));
            }
            let parse = |f: &str| f.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{f}`: {e}")));
            probs.push(parse(&rec[0])?);
            for f in rec.iter().skip(1) {
                points.push(parse(f)?);
            }
        }
        Self::from_flat(dim, points, probs)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_probabilities() {
        assert!(ScenarioSet::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.6]).is_err());
        assert!(ScenarioSet::new(vec![vec![0.0], vec![1.0]], vec![1.5, -0.5]).is_err());
        assert!(ScenarioSet::new(vec![vec![f64::NAN], vec![1.0]], vec![0.5, 0.5]).is_err());
        assert!(ScenarioSet::new(vec![vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let s = ScenarioSet::new(vec![vec![1.0, -2.5], vec![0.25, 3.0]], vec![0.75, 0.25]).unwrap();
        let csv = s.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("p,y1,y2"));
        assert_eq!(lines.next(), Some("7.5000000000000000e-1,1,-2.5"));
        assert_eq!(csv.lines().count(), 3);
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(ScenarioSet::from_csv_str("q,y1\n1,0\n").is_err());
        assert!(ScenarioSet::from_csv_str("p,y2\n1,0\n").is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip(raw in prop::collection::vec((0.01f64..1.0, -1e3f64..1e3, -1e3f64..1e3), 1..30)) {
            let total: f64 = raw.iter().map(|r| r.0).sum();
            let mut probs: Vec<f64> = raw.iter().map(|r| r.0 / total).collect();
            let drift = 1.0 - accurate_sum(probs.iter().copied());
            probs[0] += drift;
            let pts: Vec<Vec<f64>> = raw.iter().map(|r| vec![r.1, r.2]).collect();
            let s = ScenarioSet::new(pts, probs).unwrap();
            let back = ScenarioSet::from_csv_str(&s.to_csv_string()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
