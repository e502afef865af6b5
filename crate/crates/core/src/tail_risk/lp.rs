//! Dense bounded-variable revised simplex for
//! `min cᵀz  s.t.  Az = b,  l ≤ z ≤ u`.
//!
//! The basis inverse is kept explicitly and updated with eta steps,
//! with periodic reinversion. Phase one drives artificial variables
//! out; pricing is Dantzig's rule with a switch to Bland's rule after a run
//! of degenerate pivots.

#![allow(clippy::needless_range_loop)]

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-11;
const REINVERT_EVERY: usize = 64;
const DEGENERATE_RUN: usize = 30;

#[derive(Debug, Clone)]
pub struct LinearProgram {
    rows: usize,
    cols: usize,
    /// Column-major `rows × cols`.
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    /// Row multipliers `y` with reduced costs `c − Aᵀy`.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new(rows: usize, b: Vec<f64>) -> Result<Self> {
        if b.len() != rows {
            return Err(Error::DimensionMismatch { expected: rows, got: b.len() });
        }
        Ok(Self { rows, cols: 0, a: Vec::new(), b, c: Vec::new(), lower: Vec::new(), upper: Vec::new() })
    }

    /// Adds a column and returns its index. Bounds may be infinite.
    pub fn add_column(&mut self, coeffs: &[f64], cost: f64, lower: f64, upper: f64) -> Result<usize> {
        if coeffs.len() != self.rows {
            return Err(Error::DimensionMismatch { expected: self.rows, got: coeffs.len() });
        }
        if lower > upper || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(Error::Domain(format!("invalid bounds [{lower}, {upper}]")));
        }
        self.a.extend_from_slice(coeffs);
        self.c.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cols += 1;
        Ok(self.cols - 1)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn solve(&self) -> Result<LpSolution> {
        Simplex::new(self).run()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Free nonbasic variable held at zero.
    FreeZero,
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    m: usize,
    /// Structural columns followed by one artificial per row.
    n_total: usize,
    art_sign: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    z: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    /// Row-major `m × m`.
    binv: Vec<f64>,
    iterations: usize,
    since_reinvert: usize,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram) -> Self {
        let m = lp.rows;
        let n = lp.cols;
        let mut z = vec![0.0; n + m];
        let mut state = vec![State::AtLower; n + m];
        for j in 0..n {
            let (l, u) = (lp.lower[j], lp.upper[j]);
            if l.is_finite() {
                z[j] = l;
            } else if u.is_finite() {
                z[j] = u;
                state[j] = State::AtUpper;
            } else {
                state[j] = State::FreeZero;
            }
        }
        let mut resid = lp.b.clone();
        for j in 0..n {
            if z[j] != 0.0 {
                for (i, r) in resid.iter_mut().enumerate() {
                    *r -= lp.a[j * m + i] * z[j];
                }
            }
        }
        let art_sign: Vec<f64> = resid.iter().map(|r| if *r < 0.0 { -1.0 } else { 1.0 }).collect();
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        lower.extend(std::iter::repeat_n(0.0, m));
        upper.extend(std::iter::repeat_n(f64::INFINITY, m));
        let mut binv = vec![0.0; m * m];
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            z[n + i] = resid[i].abs();
            state[n + i] = State::Basic(i);
            basis.push(n + i);
            binv[i * m + i] = art_sign[i];
        }
        Self { lp, m, n_total: n + m, art_sign, lower, upper, z, state, basis, binv, iterations: 0, since_reinvert: 0 }
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        let m = self.m;
        if j < self.lp.cols {
            out.copy_from_slice(&self.lp.a[j * m..(j + 1) * m]);
        } else {
            out.fill(0.0);
            out[j - self.lp.cols] = self.art_sign[j - self.lp.cols];
        }
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        let m = self.m;
        if j < self.lp.cols {
            self.lp.a[j * m..(j + 1) * m].iter().zip(y).map(|(a, y)| a * y).sum()
        } else {
            self.art_sign[j - self.lp.cols] * y[j - self.lp.cols]
        }
    }

    fn reinvert(&mut self) -> Result<()> {
        let m = self.m;
        let mut bmat = DMatrix::zeros(m, m);
        let mut col = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for i in 0..m {
                bmat[(i, k)] = col[i];
            }
        }
        let inv = bmat.try_inverse().ok_or_else(|| Error::Singular("simplex basis became singular".into()))?;
        for i in 0..m {
            for k in 0..m {
                self.binv[i * m + k] = inv[(i, k)];
            }
        }
        // Recompute basic values from the nonbasic ones.
        let mut resid = self.lp.b.clone();
        for j in 0..self.n_total {
            if !matches!(self.state[j], State::Basic(_)) && self.z[j] != 0.0 {
                self.column(j, &mut col);
                for i in 0..m {
                    resid[i] -= col[i] * self.z[j];
                }
            }
        }
        for i in 0..m {
            let v: f64 = (0..m).map(|k| self.binv[i * m + k] * resid[k]).sum();
            self.z[self.basis[i]] = v;
        }
        self.since_reinvert = 0;
        Ok(())
    }

    /// `y = B⁻ᵀ c_B`.
    fn duals(&self, cost: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &j) in self.basis.iter().enumerate() {
            let cb = cost(j);
            if cb != 0.0 {
                for k in 0..m {
                    y[k] += cb * self.binv[i * m + k];
                }
            }
        }
        y
    }

    fn iterate(&mut self, cost: &dyn Fn(usize) -> f64, max_iter: usize) -> Result<()> {
        let m = self.m;
        let mut degenerate_run = 0usize;
        let mut w = vec![0.0; m];
        let mut col = vec![0.0; m];
        loop {
            if self.iterations >= max_iter {
                return Err(Error::NonConvergence(format!("simplex iteration cap {max_iter} reached")));
            }
            if self.since_reinvert >= REINVERT_EVERY {
                self.reinvert()?;
            }
            let y = self.duals(cost);
            let bland = degenerate_run >= DEGENERATE_RUN;
            // Pricing.
            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..self.n_total {
                if matches!(self.state[j], State::Basic(_)) || self.lower[j] == self.upper[j] {
                    continue;
                }
                let d = cost(j) - self.col_dot(j, &y);
                let dir = match self.state[j] {
                    State::AtLower if d < -OPT_TOL => 1.0,
                    State::AtUpper if d > OPT_TOL => -1.0,
                    State::FreeZero if d.abs() > OPT_TOL => -d.signum(),
                    _ => continue,
                };
                if bland {
                    entering = Some((j, dir, d));
                    break;
                }
                if entering.is_none_or(|(_, _, best)| d.abs() > best.abs()) {
                    entering = Some((j, dir, d));
                }
            }
            let Some((q, dir, _)) = entering else {
                return Ok(());
            };
            self.column(q, &mut col);
            for i in 0..m {
                w[i] = (0..m).map(|k| self.binv[i * m + k] * col[k]).sum();
            }
            // Ratio test: basic values move by −dir·θ·w.
            let mut theta = if dir > 0.0 { self.upper[q] - self.z[q] } else { self.z[q] - self.lower[q] };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let rate = dir * w[i];
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                let jb = self.basis[i];
                let room = if rate > 0.0 { self.z[jb] - self.lower[jb] } else { self.upper[jb] - self.z[jb] };
                if !room.is_finite() {
                    continue;
                }
                let ratio = room.max(0.0) / rate.abs();
                let better = match leave {
                    None => ratio < theta || (ratio == theta && theta.is_finite()),
                    Some((li, _)) => {
                        ratio < theta
                            || (ratio == theta && if bland { jb < self.basis[li] } else { w[i].abs() > w[li].abs() })
                    }
                };
                if better && ratio <= theta {
                    theta = ratio;
                    leave = Some((i, rate));
                }
            }
            if !theta.is_finite() {
                return Err(Error::Unbounded("objective decreases without bound".into()));
            }
            self.iterations += 1;
            degenerate_run = if theta <= 1e-14 { degenerate_run + 1 } else { 0 };
            self.z[q] += dir * theta;
            for i in 0..m {
                let jb = self.basis[i];
                self.z[jb] -= dir * theta * w[i];
            }
            match leave {
                None => {
                    // Bound flip.
                    self.state[q] = if dir > 0.0 { State::AtUpper } else { State::AtLower };
                    self.z[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                }
                Some((r, rate)) => {
                    let jl = self.basis[r];
                    let (value, st) =
                        if rate > 0.0 { (self.lower[jl], State::AtLower) } else { (self.upper[jl], State::AtUpper) };
                    self.z[jl] = value;
                    self.state[jl] = if value.is_finite() { st } else { State::FreeZero };
                    if !value.is_finite() {
                        self.z[jl] = 0.0;
                    }
                    self.basis[r] = q;
                    self.state[q] = State::Basic(r);
                    let piv = w[r];
                    for k in 0..m {
                        self.binv[r * m + k] /= piv;
                    }
                    for i in 0..m {
                        if i != r && w[i] != 0.0 {
                            let f = w[i];
                            for k in 0..m {
                                self.binv[i * m + k] -= f * self.binv[r * m + k];
                            }
                        }
                    }
                    self.since_reinvert += 1;
                }
            }
        }
    }

    fn run(mut self) -> Result<LpSolution> {
        let n = self.lp.cols;
        let max_iter = 50 * (self.n_total + self.m) + 1000;
        let phase_one = |j: usize| if j >= n { 1.0 } else { 0.0 };
        self.iterate(&phase_one, max_iter)?;
        self.reinvert()?;
        let infeas: f64 = (n..self.n_total).map(|j| self.z[j]).sum();
        let scale = 1.0 + self.lp.b.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if infeas > FEAS_TOL * scale {
            return Err(Error::Infeasible(format!("phase one ended with infeasibility {infeas:e}")));
        }
        // Pin artificials at zero for phase two.
        for j in n..self.n_total {
            self.upper[j] = 0.0;
            if !matches!(self.state[j], State::Basic(_)) {
                self.z[j] = 0.0;
                self.state[j] = State::AtLower;
            }
        }
        let lp = self.lp;
        let phase_two = |j: usize| if j < n { lp.c[j] } else { 0.0 };
        self.iterate(&phase_two, max_iter)?;
        self.reinvert()?;
        let duals = self.duals(&phase_two);
        let z: Vec<f64> = self.z[..n].iter().enumerate().map(|(j, v)| v.clamp(lp.lower[j], lp.upper[j])).collect();
        let objective = z.iter().zip(&lp.c).map(|(z, c)| z * c).sum();
        Ok(LpSolution { z, objective, duals, iterations: self.iterations })
    }
}
