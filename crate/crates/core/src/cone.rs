//! Closed convex cones and Euclidean projection onto them.
//!
//! Polyhedral cones are described by their generators; projection solves a
//! nonnegative least-squares problem over the generators with the
//! Lawson–Hanson active-set method.

use nalgebra::{DMatrix, DVector};

use crate::distributions::check_nonsingular;
use crate::error::{check_dim, Error, Result};

/// Generators whose cosine similarity exceeds `1 − DEDUP_TOL` are merged.
pub const DEDUP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum ConeSpec {
    FullSpace(usize),
    NonnegOrthant(usize),
    Generated(GeneratedCone),
}

/// `cone{g₁, …, g_k}` with unit-length, pairwise distinct generators.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCone {
    dim: usize,
    generators: Vec<Vec<f64>>,
    orthogonal: bool,
}

impl GeneratedCone {
    pub fn new(generators: Vec<Vec<f64>>) -> Result<Self> {
        let dim = generators
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Domain("cone needs at least one generator".into()))?;
        if dim == 0 {
            return Err(Error::Domain("cone dimension must be ≥ 1".into()));
        }
        let mut kept: Vec<Vec<f64>> = Vec::with_capacity(generators.len());
        for g in generators {
            check_dim(dim, g.len())?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("cone generators must be finite".into()));
            }
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let unit: Vec<f64> = g.iter().map(|v| v / norm).collect();
            if kept.iter().any(|k| dot(k, &unit) > 1.0 - DEDUP_TOL) {
                continue;
            }
            kept.push(unit);
        }
        if kept.is_empty() {
            return Err(Error::Domain("cone needs at least one nonzero generator".into()));
        }
        let orthogonal = kept.iter().enumerate().all(|(i, a)| kept[i + 1..].iter().all(|b| dot(a, b) == 0.0));
        Ok(Self { dim, generators: kept, orthogonal })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    pub fn max_iterations(&self) -> usize {
        10 * (self.generators.len() + self.dim)
    }

    fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        if self.orthogonal {
            // Mutually orthogonal unit generators: coordinates decouple.
            let mut p = vec![0.0; self.dim];
            for g in &self.generators {
                let c = dot(g, y);
                if c > 0.0 {
                    p.iter_mut().zip(g).for_each(|(pi, gi)| *pi += c * gi);
                }
            }
            return Ok(p);
        }
        let coef = nnls(&self.generators, y, self.max_iterations())?;
        let mut p = vec![0.0; self.dim];
        for (c, g) in coef.iter().zip(&self.generators) {
            if *c != 0.0 {
                p.iter_mut().zip(g).for_each(|(pi, gi)| *pi += c * gi);
            }
        }
        Ok(p)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl ConeSpec {
    pub fn dim(&self) -> usize {
        match self {
            ConeSpec::FullSpace(d) | ConeSpec::NonnegOrthant(d) => *d,
            ConeSpec::Generated(g) => g.dim(),
        }
    }

    pub fn generated(generators: Vec<Vec<f64>>) -> Result<Self> {
        GeneratedCone::new(generators).map(ConeSpec::Generated)
    }

    /// Euclidean projection `argmin_{x ∈ K} ‖x − y‖`.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), y.len())?;
        match self {
            ConeSpec::FullSpace(_) => Ok(y.to_vec()),
            ConeSpec::NonnegOrthant(_) => Ok(y.iter().map(|v| v.max(0.0)).collect()),
            ConeSpec::Generated(g) => g.project(y),
        }
    }

    /// Membership up to `tol` in distance.
    pub fn contains(&self, y: &[f64], tol: f64) -> Result<bool> {
        let p = self.project(y)?;
        let dist: f64 = p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        Ok(dist <= tol)
    }
}

/// Image `P·K` of a cone under a non-singular linear map.
pub fn transform_cone(cone: &ConeSpec, p: &DMatrix<f64>) -> Result<ConeSpec> {
    let d = cone.dim();
    if p.nrows() != d || p.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: p.nrows().max(p.ncols()) });
    }
    check_nonsingular(p)?;
    let apply = |g: &[f64]| -> Vec<f64> { (0..d).map(|i| (0..d).map(|j| p[(i, j)] * g[j]).sum()).collect() };
    match cone {
        ConeSpec::FullSpace(_) => Ok(ConeSpec::FullSpace(d)),
        ConeSpec::NonnegOrthant(_) => {
            ConeSpec::generated((0..d).map(|j| p.column(j).iter().copied().collect()).collect())
        }
        ConeSpec::Generated(g) => ConeSpec::generated(g.generators().iter().map(|v| apply(v)).collect()),
    }
}

/// `conic{x : Σxᵢ = 1, x ≥ 0}`, the nonnegative orthant.
pub fn conic_hull_of_simplex(d: usize) -> Result<ConeSpec> {
    if d == 0 {
        return Err(Error::Domain("dimension must be ≥ 1".into()));
    }
    Ok(ConeSpec::NonnegOrthant(d))
}

/// Lawson–Hanson NNLS: `min ‖Σ cⱼ gⱼ − y‖` over `c ≥ 0`.
pub fn nnls(generators: &[Vec<f64>], y: &[f64], max_iter: usize) -> Result<Vec<f64>> {
    let k = generators.len();
    let d = y.len();
    let a = DMatrix::from_fn(d, k, |i, j| generators[j][i]);
    let b = DVector::from_column_slice(y);
    let tol = 1e-13 * (1.0 + b.norm()) * (k as f64).sqrt().max(1.0);

    let mut x = DVector::zeros(k);
    let mut passive = vec![false; k];
    let mut iterations = 0usize;

    let gradient = |x: &DVector<f64>| -> DVector<f64> { a.transpose() * (&b - &a * x) };
    let mut w = gradient(&x);
    let mut blocked = vec![false; k];

    loop {
        let candidate =
            (0..k).filter(|&j| !passive[j] && !blocked[j] && w[j] > tol).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j_new) = candidate else { break };
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::ProjectionFailed { iterations, residual: w.max().max(0.0) });
        }
        passive[j_new] = true;
        let mut first_inner = true;
        loop {
            let idx: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
            if idx.is_empty() {
                break;
            }
            let s_p = least_squares(&a, &b, &idx)?;
            if s_p.iter().all(|&v| v > 0.0) {
                for (pos, &j) in idx.iter().enumerate() {
                    x[j] = s_p[pos];
                }
                break;
            }
            if first_inner && s_p[idx.iter().position(|&j| j == j_new).unwrap()] <= 0.0 {
                // Rounding made the entering column unattractive; skip it.
                passive[j_new] = false;
                blocked[j_new] = true;
                break;
            }
            first_inner = false;
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::ProjectionFailed { iterations, residual: w.max().max(0.0) });
            }
            let mut alpha = f64::INFINITY;
            for (pos, &j) in idx.iter().enumerate() {
                if s_p[pos] <= 0.0 {
                    let denom = x[j] - s_p[pos];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (pos, &j) in idx.iter().enumerate() {
                x[j] += alpha * (s_p[pos] - x[j]);
                if x[j] <= 1e-15 * (1.0 + b.norm()) {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
        w = gradient(&x);
        if blocked.iter().any(|&bl| bl) && !blocked[j_new] {
            blocked.iter_mut().for_each(|bl| *bl = false);
        }
    }
    Ok(x.iter().copied().collect())
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>, idx: &[usize]) -> Result<Vec<f64>> {
    let sub = DMatrix::from_fn(a.nrows(), idx.len(), |i, j| a[(i, idx[j])]);
    let svd = sub.svd(true, true);
    let sol = svd.solve(b, 1e-13).map_err(|_| Error::ProjectionFailed { iterations: 0, residual: f64::NAN })?;
    Ok(sol.iter().copied().collect())
}
