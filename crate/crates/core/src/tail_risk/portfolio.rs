use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::lp::LinearProgram;
use super::{cvar_discrete, var_discrete, LossSample, Normalization};
use crate::distributions::{std_normal_pdf, std_normal_quantile};
use crate::error::{check_dim, check_probability_open, Error, Result};
use crate::scenario::{accurate_sum, ScenarioSet};

/// Stopping tolerance on the Frank–Wolfe duality gap of the exact solver.
pub const EXACT_GAP_TOL: f64 = 1e-10;
/// Gaps above `−GAP_CLAMP_TOL` are clamped to zero.
pub const GAP_CLAMP_TOL: f64 = 1e-8;
const FEAS_TOL: f64 = 1e-9;
const MAX_EXACT_ITER: usize = 1_000_000;
const POLISH_START_GAP: f64 = 1e-6;
const POLISH_ITER: usize = 50;
const SUPPORT_TOL: f64 = 1e-9;
const ACTIVE_TOL: f64 = 1e-9;

/// Mean-CVaR portfolio problem with Normal returns `N(μ, Σ)`:
/// minimize β-CVaR of `−xᵀY` over `x ≥ 0`, `μᵀx ≥ t` and, when `budget`
/// is set, `Σxᵢ = 1`.
#[derive(Debug, Clone)]
pub struct PortfolioProblem {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    beta: f64,
    t: f64,
    budget: bool,
}

impl PortfolioProblem {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, beta: f64, t: f64) -> Result<Self> {
        check_probability_open(beta, "beta")?;
        check_dim(mu.len(), sigma.nrows())?;
        check_dim(mu.len(), sigma.ncols())?;
        if mu.is_empty() || mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) || t.is_nan() {
            return Err(Error::Domain("portfolio data must be finite and non-empty".into()));
        }
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let chol =
            Cholesky::new(sigma.clone()).ok_or_else(|| Error::Singular("Sigma is not positive definite".into()))?;
        Ok(Self { mu, sigma, chol, beta, t, budget: true })
    }

    pub fn with_budget(mut self, budget: bool) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_target(&self, t: f64) -> Self {
        Self { t, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn target(&self) -> f64 {
        self.t
    }

    pub fn budget(&self) -> bool {
        self.budget
    }

    pub fn is_feasible(&self) -> bool {
        let max_mu = self.mu.max();
        if self.budget {
            max_mu >= self.t
        } else {
            self.t <= 0.0 || max_mu > 0.0
        }
    }

    /// Feasibility of a candidate within `FEAS_TOL`.
    pub fn check_candidate(&self, x: &[f64]) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        if x.iter().any(|v| !v.is_finite() || *v < -FEAS_TOL) {
            return Err(Error::Infeasible("candidate has negative or non-finite weights".into()));
        }
        if self.budget && (accurate_sum(x.iter().copied()) - 1.0).abs() > FEAS_TOL {
            return Err(Error::Infeasible("candidate violates the budget constraint".into()));
        }
        let ret = self.expected_return(x);
        if ret < self.t - FEAS_TOL {
            return Err(Error::Infeasible(format!("candidate return {ret} is below the target {}", self.t)));
        }
        Ok(())
    }

    pub fn expected_return(&self, x: &[f64]) -> f64 {
        accurate_sum(x.iter().zip(self.mu.iter()).map(|(a, b)| a * b))
    }

    /// `√(xᵀΣx)`.
    fn sigma_norm(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        (self.chol.l().transpose() * v).norm()
    }

    fn tail_density(&self) -> f64 {
        std_normal_pdf(std_normal_quantile(self.beta).expect("beta validated in constructor"))
    }

    fn objective_and_gradient(&self, x: &[f64], c: f64) -> (f64, Vec<f64>) {
        let v = DVector::from_column_slice(x);
        let sv = &self.sigma * &v;
        let s = v.dot(&sv).max(0.0).sqrt();
        let w = 1.0 - self.beta;
        let f = -w * self.mu.dot(&v) + c * s;
        let g = if s > 0.0 { -&self.mu * w + sv * (c / s) } else { -&self.mu * w };
        (f, g.as_slice().to_vec())
    }
}

/// Unnormalized β-CVaR of `−xᵀY` for `Y ~ N(μ, Σ)`:
/// `−(1−β)μᵀx + √(xᵀΣx)·φ(Φ⁻¹(β))`.
pub fn cvar_normal_analytic(x: &[f64], prob: &PortfolioProblem) -> Result<f64> {
    check_dim(prob.dim(), x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("portfolio weights must be finite".into()));
    }
    Ok(-(1.0 - prob.beta) * prob.expected_return(x) + prob.sigma_norm(x) * prob.tail_density())
}

/// Losses `−xᵀyᵢ` of a portfolio on each scenario.
pub fn portfolio_losses(scens: &ScenarioSet, x: &[f64]) -> Result<LossSample> {
    check_dim(scens.dim(), x.len())?;
    LossSample::from_scenarios(scens, |y| -accurate_sum(x.iter().zip(y).map(|(a, b)| a * b)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvarSolution {
    pub x: Vec<f64>,
    /// CVaR of the returned portfolio on the scenario set.
    pub objective: f64,
    /// Optimal value reported by the linear program.
    pub lp_objective: f64,
    pub var: f64,
    pub iterations: usize,
}

/// Scenario-based CVaR minimization with the budget constraint on.
pub fn solve_cvar_portfolio(
    scens: &ScenarioSet,
    beta: f64,
    t: f64,
    normalization: Normalization,
) -> Result<CvarSolution> {
    solve_cvar_portfolio_with(scens, beta, t, normalization, true)
}

/// Solves `min (1−β)α + Σ pᵢuᵢ` over `x ≥ 0, u ≥ 0, α` subject to
/// `uᵢ ≥ −yᵢᵀx − α`, `ȳᵀx ≥ t` and optionally `Σx = 1`.
///
/// The linear program actually handed to the simplex is the dual, whose
/// basis has only `d + 1` rows; the portfolio is read off its row duals.
pub fn solve_cvar_portfolio_with(
    scens: &ScenarioSet,
    beta: f64,
    t: f64,
    normalization: Normalization,
    budget: bool,
) -> Result<CvarSolution> {
    check_probability_open(beta, "beta")?;
    if !t.is_finite() {
        return Err(Error::Domain("target return must be finite".into()));
    }
    let d = scens.dim();
    let mean = scens.mean();
    let max_mean = mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let feasible = if budget { max_mean >= t } else { t <= 0.0 || max_mean > 0.0 };
    if !feasible {
        return Err(Error::Infeasible(format!(
            "no portfolio reaches target {t} on this scenario set (best scenario mean {max_mean})"
        )));
    }

    let mut b = vec![0.0; d + 1];
    b[d] = 1.0 - beta;
    let mut lp = LinearProgram::new(d + 1, b)?;
    let mut col = vec![0.0; d + 1];
    for (p, y) in scens.iter() {
        col[..d].copy_from_slice(y);
        col[d] = 1.0;
        lp.add_column(&col, 0.0, 0.0, p)?;
    }
    col[..d].copy_from_slice(&mean);
    col[d] = 0.0;
    lp.add_column(&col, -t, 0.0, f64::INFINITY)?;
    if budget {
        col[..d].fill(1.0);
        col[d] = 0.0;
        lp.add_column(&col, -1.0, f64::NEG_INFINITY, f64::INFINITY)?;
    }
    for j in 0..d {
        col.fill(0.0);
        col[j] = 1.0;
        lp.add_column(&col, 0.0, 0.0, f64::INFINITY)?;
    }
    let sol = lp.solve().map_err(|e| match e {
        Error::Infeasible(_) => Error::Unbounded("CVaR decreases without bound along a feasible ray".into()),
        Error::Unbounded(_) => Error::Infeasible(format!("return target {t} is unreachable")),
        other => other,
    })?;

    let mut x: Vec<f64> = sol.duals[..d].iter().map(|y| (-y).max(0.0)).collect();
    if budget {
        let s = accurate_sum(x.iter().copied());
        if s <= 0.0 {
            return Err(Error::NonConvergence("recovered portfolio has zero weight".into()));
        }
        x.iter_mut().for_each(|v| *v /= s);
    }
    let losses = portfolio_losses(scens, &x)?;
    Ok(CvarSolution {
        objective: cvar_discrete(&losses, beta, normalization)?,
        lp_objective: normalization.scale(-sol.objective, beta),
        var: var_discrete(&losses, beta)?,
        x,
        iterations: sol.iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Duality-gap bound at termination.
    pub gap: f64,
    pub iterations: usize,
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let cand = (cum - 1.0) / (k + 1) as f64;
        if uk - cand > 0.0 {
            tau = cand;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

struct FeasibleSet<'a> {
    prob: &'a PortfolioProblem,
    /// Vertices of the polytope (budget case only).
    vertices: Vec<Vec<f64>>,
}

impl<'a> FeasibleSet<'a> {
    fn new(prob: &'a PortfolioProblem) -> Self {
        let d = prob.dim();
        let mu = prob.mu.as_slice();
        let t = prob.t;
        let mut vertices = Vec::new();
        if prob.budget {
            for i in 0..d {
                if mu[i] >= t {
                    let mut e = vec![0.0; d];
                    e[i] = 1.0;
                    vertices.push(e);
                }
            }
            for i in 0..d {
                for j in 0..d {
                    if mu[i] > t && mu[j] < t {
                        let theta = (t - mu[j]) / (mu[i] - mu[j]);
                        let mut v = vec![0.0; d];
                        v[i] = theta;
                        v[j] = 1.0 - theta;
                        vertices.push(v);
                    }
                }
            }
        }
        Self { prob, vertices }
    }

    fn base_projection(&self, v: &[f64]) -> Vec<f64> {
        if self.prob.budget {
            project_simplex(v)
        } else {
            v.iter().map(|x| x.max(0.0)).collect()
        }
    }

    fn project(&self, v: &[f64]) -> Vec<f64> {
        let mu = self.prob.mu.as_slice();
        let t = self.prob.t;
        let shifted = |lam: f64| -> Vec<f64> {
            let w: Vec<f64> = v.iter().zip(mu).map(|(a, m)| a + lam * m).collect();
            self.base_projection(&w)
        };
        let x0 = shifted(0.0);
        if self.prob.expected_return(&x0) >= t {
            return x0;
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.prob.expected_return(&shifted(hi)) < t {
            hi *= 2.0;
            if hi > 1e15 {
                break;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.prob.expected_return(&shifted(mid)) >= t {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        shifted(hi)
    }

    /// Frank–Wolfe gap `gᵀx − min_{v} gᵀv` over the polytope vertices.
    fn fw_gap(&self, x: &[f64], g: &[f64]) -> f64 {
        let gx: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
        let best = self
            .vertices
            .iter()
            .map(|v| g.iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        gx - best
    }
}

/// Newton's method on the face of the polytope spanned by the support of `x`,
/// with the return constraint held as an equality when it is active.
/// Returns the refined point, its objective and its Frank–Wolfe gap when the
/// refined point stays feasible.
fn polish_on_face(prob: &PortfolioProblem, set: &FeasibleSet<'_>, x: &[f64], c: f64) -> Option<(Vec<f64>, f64, f64)> {
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > SUPPORT_TOL).collect();
    let k = support.len();
    if k == 0 {
        return None;
    }
    let mu = prob.mu.as_slice();
    let binding = prob.t.is_finite() && prob.expected_return(x) - prob.t < ACTIVE_TOL;
    let m = 1 + usize::from(binding);
    let mut z: Vec<f64> = vec![0.0; x.len()];
    for &i in &support {
        z[i] = x[i];
    }
    for _ in 0..POLISH_ITER {
        let v = DVector::from_column_slice(&z);
        let sv = &prob.sigma * &v;
        let s = v.dot(&sv).sqrt();
        if s.is_nan() || s <= 0.0 {
            return None;
        }
        let (_, g) = prob.objective_and_gradient(&z, c);
        let mut kkt = DMatrix::<f64>::zeros(k + m, k + m);
        let mut rhs = DVector::<f64>::zeros(k + m);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = c * (prob.sigma[(i, j)] / s - sv[i] * sv[j] / (s * s * s));
            }
            kkt[(a, k)] = 1.0;
            kkt[(k, a)] = 1.0;
            if binding {
                kkt[(a, k + 1)] = mu[i];
                kkt[(k + 1, a)] = mu[i];
            }
            rhs[a] = -g[i];
        }
        rhs[k] = 1.0 - support.iter().map(|&i| z[i]).sum::<f64>();
        if binding {
            rhs[k + 1] = prob.t - support.iter().map(|&i| mu[i] * z[i]).sum::<f64>();
        }
        let step = kkt.lu().solve(&rhs)?;
        let mut size = 0.0f64;
        for (a, &i) in support.iter().enumerate() {
            z[i] += step[a];
            size = size.max(step[a].abs());
        }
        if size < 1e-15 {
            break;
        }
    }
    if z.iter().any(|&v| v < 0.0) || (prob.t.is_finite() && prob.expected_return(&z) < prob.t - ACTIVE_TOL) {
        return None;
    }
    let (f, g) = prob.objective_and_gradient(&z, c);
    let gap = set.fw_gap(&z, &g);
    Some((z, f, gap))
}

/// Minimizes the analytic Normal CVaR over the feasible set with an
/// accelerated projected gradient method (restarted FISTA with backtracking).
///
/// With the budget on, iteration stops once the Frank–Wolfe gap, an upper
/// bound on the suboptimality, drops below [`EXACT_GAP_TOL`].
pub fn solve_exact_normal(prob: &PortfolioProblem) -> Result<ExactSolution> {
    if !prob.is_feasible() {
        return Err(Error::Infeasible(format!(
            "target return {} exceeds every attainable expected return (max μ = {})",
            prob.t,
            prob.mu.max()
        )));
    }
    if !prob.budget {
        return solve_without_budget(prob);
    }
    let c = prob.tail_density();
    let set = FeasibleSet::new(prob);
    let d = prob.dim();
    let mut x = set.project(&vec![1.0 / d as f64; d]);
    let (mut fx, mut gx) = prob.objective_and_gradient(&x, c);
    let mut yk = x.clone();
    let mut tk = 1.0f64;
    let mut lip = 1e-3;
    let mut gap = set.fw_gap(&x, &gx);
    for iter in 0..MAX_EXACT_ITER {
        if gap <= EXACT_GAP_TOL {
            return Ok(ExactSolution { value: fx, x, gap: gap.max(0.0), iterations: iter });
        }
        let (fy, gy) = prob.objective_and_gradient(&yk, c);
        let (x_new, f_new) = loop {
            let step: Vec<f64> = yk.iter().zip(&gy).map(|(a, g)| a - g / lip).collect();
            let cand = set.project(&step);
            let (fc, _) = prob.objective_and_gradient(&cand, c);
            let diff: Vec<f64> = cand.iter().zip(&yk).map(|(a, b)| a - b).collect();
            let lin: f64 = gy.iter().zip(&diff).map(|(g, d)| g * d).sum();
            let quad: f64 = diff.iter().map(|d| d * d).sum::<f64>() * lip * 0.5;
            if fc <= fy + lin + quad + 1e-15 * fy.abs().max(1.0) || lip > 1e15 {
                break (cand, fc);
            }
            lip *= 2.0;
        };
        if f_new > fx {
            // Function-value restart. A restart near the optimum usually
            // means rounding has stalled the method, so finish on the face.
            if gap < POLISH_START_GAP {
                if let Some((xp, fp, gp)) = polish_on_face(prob, &set, &x, c) {
                    if gp <= EXACT_GAP_TOL {
                        return Ok(ExactSolution { value: fp, x: xp, gap: gp.max(0.0), iterations: iter });
                    }
                }
            }
            yk = x.clone();
            tk = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        let mom = (tk - 1.0) / t_next;
        yk = x_new.iter().zip(&x).map(|(a, b)| a + mom * (a - b)).collect();
        tk = t_next;
        x = x_new;
        fx = f_new;
        gx = prob.objective_and_gradient(&x, c).1;
        gap = set.fw_gap(&x, &gx);
    }
    Err(Error::NonConvergence(format!("exact solver stopped with duality gap {gap:e}")))
}

fn solve_without_budget(prob: &PortfolioProblem) -> Result<ExactSolution> {
    let d = prob.dim();
    // Positive homogeneity: the problem is unbounded iff some nonnegative
    // direction with positive return has negative CVaR.
    let unit = PortfolioProblem { budget: true, t: f64::NEG_INFINITY, ..prob.clone() };
    let on_simplex = solve_exact_normal(&unit)?;
    if on_simplex.value < -EXACT_GAP_TOL {
        return Err(Error::Unbounded("CVaR decreases without bound along a feasible ray".into()));
    }
    if prob.t <= 0.0 {
        return Ok(ExactSolution { x: vec![0.0; d], value: 0.0, gap: 0.0, iterations: on_simplex.iterations });
    }
    // The return constraint binds: minimize over {x ≥ 0, μᵀx = t}, which
    // by homogeneity is t · min over the simplex of CVaR(u)/μᵀu.
    let c = prob.tail_density();
    let set = FeasibleSet::new(prob);
    let mut x = set.project(&vec![prob.t / prob.mu.max(); d]);
    let (mut fx, _) = prob.objective_and_gradient(&x, c);
    let mut yk = x.clone();
    let mut tk = 1.0f64;
    let mut lip = 1e-3;
    for iter in 0..MAX_EXACT_ITER {
        let (fy, gy) = prob.objective_and_gradient(&yk, c);
        let (x_new, f_new) = loop {
            let step: Vec<f64> = yk.iter().zip(&gy).map(|(a, g)| a - g / lip).collect();
            let cand = set.project(&step);
            let (fc, _) = prob.objective_and_gradient(&cand, c);
            let diff: Vec<f64> = cand.iter().zip(&yk).map(|(a, b)| a - b).collect();
            let lin: f64 = gy.iter().zip(&diff).map(|(g, d)| g * d).sum();
            let quad: f64 = diff.iter().map(|d| d * d).sum::<f64>() * lip * 0.5;
            if fc <= fy + lin + quad + 1e-15 * fy.abs().max(1.0) || lip > 1e15 {
                break (cand, fc);
            }
            lip *= 2.0;
        };
        let (_, gx) = prob.objective_and_gradient(&x_new, c);
        let step: Vec<f64> = x_new.iter().zip(&gx).map(|(a, g)| a - g / lip).collect();
        let mapped = set.project(&step);
        let residual = mapped.iter().zip(&x_new).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() * lip;
        if f_new > fx {
            yk = x.clone();
            tk = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        let mom = (tk - 1.0) / t_next;
        yk = x_new.iter().zip(&x).map(|(a, b)| a + mom * (a - b)).collect();
        tk = t_next;
        x = x_new;
        fx = f_new;
        if residual <= EXACT_GAP_TOL {
            return Ok(ExactSolution { value: fx, x, gap: residual, iterations: iter });
        }
    }
    Err(Error::NonConvergence("exact solver without budget did not reach the stationarity tolerance".into()))
}

/// `cvar_normal_analytic(x) − v*`, clamped at zero within [`GAP_CLAMP_TOL`].
pub fn optimality_gap(x: &[f64], prob: &PortfolioProblem, exact: &ExactSolution) -> Result<f64> {
    prob.check_candidate(x)?;
    let gap = cvar_normal_analytic(x, prob)? - exact.value;
    if gap < -GAP_CLAMP_TOL {
        return Err(Error::NonConvergence(format!(
            "candidate beats the exact optimum by {:e}; the reference solution is not optimal",
            -gap
        )));
    }
    Ok(gap.max(0.0))
}

/// Optimality gap measured against the efficient frontier.
///
/// A portfolio optimized on scenarios meets the return target only on the
/// sample mean and may fall short of it under the true mean. Such a
/// portfolio is compared with the exact optimum for the return it actually
/// achieves, which keeps the gap nonnegative. Portfolios meeting the target
/// use [`optimality_gap`] directly.
pub fn frontier_gap(x: &[f64], prob: &PortfolioProblem, exact: &ExactSolution) -> Result<f64> {
    let ret = prob.expected_return(x);
    if ret >= prob.t - FEAS_TOL {
        return optimality_gap(x, prob, exact);
    }
    let relaxed = prob.with_target(ret);
    let exact_relaxed = solve_exact_normal(&relaxed)?;
    optimality_gap(x, &relaxed, &exact_relaxed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simplex_grid(res: usize) -> impl Iterator<Item = Vec<f64>> {
        (0..=res).map(move |k| {
            let a = k as f64 / res as f64;
            vec![a, 1.0 - a]
        })
    }

    #[test]
    fn analytic_examples() {
        let prob = PortfolioProblem::new(DVector::zeros(2), DMatrix::identity(2, 2), 0.95, -1.0).unwrap();
        assert_eq!(cvar_normal_analytic(&[0.0, 0.0], &prob).unwrap(), 0.0);
        let v = cvar_normal_analytic(&[1.0, 0.0], &prob).unwrap();
        assert!((v - 0.103_135_3).abs() < 1e-6, "{v}");
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(project_simplex(&[3.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.2, -0.1]);
        assert!((p[0] - 0.65).abs() < 1e-15 && (p[1] - 0.35).abs() < 1e-15);
    }

    #[test]
    fn exact_uniform_when_unconstrained() {
        for d in [2, 3, 7] {
            let prob =
                PortfolioProblem::new(DVector::zeros(d), DMatrix::identity(d, d), 0.95, f64::NEG_INFINITY).unwrap();
            let sol = solve_exact_normal(&prob).unwrap();
            for v in &sol.x {
                assert!((v - 1.0 / d as f64).abs() < 1e-6, "{:?}", sol.x);
            }
        }
    }

    #[test]
    fn exact_matches_grid_d2() {
        let mu = DVector::from_vec(vec![0.02, 0.005]);
        let sigma = DMatrix::from_row_slice(2, 2, &[0.01, 0.002, 0.002, 0.0025]);
        let prob = PortfolioProblem::new(mu, sigma, 0.95, 0.01).unwrap();
        let sol = solve_exact_normal(&prob).unwrap();
        // The return constraint may bind, so its boundary point joins the grid.
        let theta = (0.01 - 0.005) / (0.02 - 0.005);
        let best = simplex_grid(100_000)
            .chain(std::iter::once(vec![theta, 1.0 - theta]))
            .filter(|x| prob.expected_return(x) >= 0.01 - 1e-15)
            .map(|x| cvar_normal_analytic(&x, &prob).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(sol.value <= best + 1e-12, "{} vs {best}", sol.value);
        assert!(best - sol.value < 1e-8);
        assert_eq!(optimality_gap(&sol.x, &prob, &sol).unwrap(), 0.0);
    }

    #[test]
    fn gap_is_quadratic_near_optimum() {
        let mu = DVector::from_vec(vec![0.01, 0.012, 0.008]);
        let sigma = DMatrix::from_row_slice(3, 3, &[0.004, 0.001, 0.0, 0.001, 0.006, 0.001, 0.0, 0.001, 0.003]);
        let prob = PortfolioProblem::new(mu, sigma, 0.95, 0.0).unwrap();
        let sol = solve_exact_normal(&prob).unwrap();
        assert!(sol.x.iter().all(|v| *v > 0.05), "interior optimum expected: {:?}", sol.x);
        let dir = [1.0, -0.5, -0.5];
        let gap = |h: f64| {
            let x: Vec<f64> = sol.x.iter().zip(dir).map(|(a, b)| a + h * b).collect();
            optimality_gap(&x, &prob, &sol).unwrap()
        };
        let (g1, g2) = (gap(1e-2), gap(2e-2));
        assert!(g1 > 0.0);
        assert!((g2 / g1 - 4.0).abs() < 0.2, "{g1} {g2}");
    }

    #[test]
    fn infeasible_inputs() {
        let prob =
            PortfolioProblem::new(DVector::from_vec(vec![0.01, 0.0]), DMatrix::identity(2, 2), 0.9, 0.05).unwrap();
        assert!(matches!(solve_exact_normal(&prob), Err(Error::Infeasible(_))));
        let prob = prob.with_target(0.005);
        let sol = solve_exact_normal(&prob).unwrap();
        assert!(matches!(optimality_gap(&[0.0, 1.0], &prob, &sol), Err(Error::Infeasible(_))));
        assert!(frontier_gap(&[0.0, 1.0], &prob, &sol).unwrap() >= 0.0);
    }

    #[test]
    fn lp_one_asset_and_identical_assets() {
        let scens = ScenarioSet::equiprobable(vec![vec![0.1], vec![-0.2], vec![0.05], vec![0.3]]).unwrap();
        let sol = solve_cvar_portfolio(&scens, 0.75, 0.0, Normalization::PaperUnnormalized).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.objective - 0.05).abs() < 1e-12, "{sol:?}");
        assert!((sol.objective - sol.lp_objective).abs() < 1e-10);

        let scens = ScenarioSet::equiprobable(vec![vec![0.1, 0.1], vec![-0.2, -0.2], vec![0.3, 0.3]]).unwrap();
        let sol = solve_cvar_portfolio(&scens, 0.5, 0.0, Normalization::PaperUnnormalized).unwrap();
        let single = solve_cvar_portfolio(
            &ScenarioSet::equiprobable(vec![vec![0.1], vec![-0.2], vec![0.3]]).unwrap(),
            0.5,
            0.0,
            Normalization::PaperUnnormalized,
        )
        .unwrap();
        assert!((sol.objective - single.objective).abs() < 1e-12);
    }

    #[test]
    fn lp_matches_grid_d2() {
        let scens = ScenarioSet::new(
            vec![vec![0.05, -0.02], vec![-0.04, 0.03], vec![0.02, 0.01], vec![-0.01, -0.03], vec![0.03, 0.04]],
            vec![0.2, 0.15, 0.25, 0.3, 0.1],
        )
        .unwrap();
        for (beta, t) in [(0.8, 0.0), (0.6, 0.005), (0.9, -1.0)] {
            let sol = solve_cvar_portfolio(&scens, beta, t, Normalization::PaperUnnormalized).unwrap();
            assert!((sol.objective - sol.lp_objective).abs() < 1e-10, "{sol:?}");
            let mean = scens.mean();
            let best = simplex_grid(1000)
                .filter(|x| x[0] * mean[0] + x[1] * mean[1] >= t)
                .map(|x| {
                    cvar_discrete(&portfolio_losses(&scens, &x).unwrap(), beta, Normalization::PaperUnnormalized)
                        .unwrap()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(sol.objective <= best + 1e-12 && best - sol.objective < 1e-3, "{} {best}", sol.objective);
        }
    }

    #[test]
    fn lp_infeasible_target() {
        let scens = ScenarioSet::equiprobable(vec![vec![0.01, 0.0], vec![0.01, 0.02]]).unwrap();
        assert!(matches!(solve_cvar_portfolio(&scens, 0.5, 0.5, Normalization::Standard), Err(Error::Infeasible(_))));
    }
}
