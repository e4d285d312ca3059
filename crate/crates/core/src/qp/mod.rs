//! Convex quadratic programs of the form
//!
//! ```text
//! minimize    ½ xᵀ P x + cᵀ x
//! subject to  l ≤ A x ≤ u
//! ```
//!
//! solved by an operator-splitting (ADMM) iteration. Each iteration solves
//! one linear system with a fixed positive definite matrix and projects onto
//! the box `[l, u]`; the matrix is refactored only when the penalty changes.
//! Once the iterates settle, a polishing step solves the equality-constrained
//! KKT system on the guessed active set, which typically recovers a solution
//! accurate to machine precision.

mod admm;
mod polish;
mod scaling;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub use admm::solve;

/// Bounds at or beyond this magnitude are treated as absent.
pub const INFINITY_BOUND: f64 = 1e20;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

impl QpProblem {
    /// Validates dimensions, symmetry of `P` and `l ≤ u`. Infinite bounds are
    /// clamped to `±INFINITY_BOUND`.
    pub fn new(p: DMatrix<f64>, c: DVector<f64>, a: DMatrix<f64>, l: DVector<f64>, u: DVector<f64>) -> Result<Self> {
        let d = c.len();
        check_dim(d, p.nrows(), "P rows")?;
        check_dim(d, p.ncols(), "P columns")?;
        check_dim(d, a.ncols(), "A columns")?;
        check_dim(a.nrows(), l.len(), "lower bound")?;
        check_dim(a.nrows(), u.len(), "upper bound")?;
        if p.iter().chain(c.iter()).chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("P, c and A must be finite".into()));
        }
        let asym = (&p - p.transpose()).amax();
        if asym > 1e-12 * p.amax().max(f64::MIN_POSITIVE) {
            return Err(Error::Validation(format!("P is not symmetric (max asymmetry {asym:e})")));
        }
        let clamp = |v: f64| v.clamp(-INFINITY_BOUND, INFINITY_BOUND);
        let l = l.map(clamp);
        let u = u.map(clamp);
        for i in 0..l.len() {
            if l[i].is_nan() || u[i].is_nan() || l[i] > u[i] {
                return Err(Error::Validation(format!(
                    "constraint {i}: lower bound {} exceeds upper bound {}",
                    l[i], u[i]
                )));
            }
        }
        Ok(Self { p, c, a, l, u })
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.l.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.c.dot(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Solved,
    MaxIter,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Constraint multipliers; negative on active lower bounds, positive on
    /// active upper bounds.
    pub y: DVector<f64>,
    pub status: SolveStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub objective: f64,
    pub polished: bool,
    /// Objective at every iteration, filled only when `SolverSettings::trace` is set.
    pub objective_trace: Vec<f64>,
}

impl QpSolution {
    /// Turns anything but `Solved` into an error.
    pub fn into_solved(self) -> Result<Self> {
        match self.status {
            SolveStatus::Solved => Ok(self),
            s => Err(Error::Solver(format!(
                "status {s:?} after {} iterations (primal residual {:e}, dual residual {:e})",
                self.iterations, self.primal_residual, self.dual_residual
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub polish: bool,
    pub adaptive_rho: bool,
    pub scaling_iters: usize,
    /// Residuals are evaluated (and the penalty possibly adapted) this often.
    pub check_every: usize,
    pub trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            max_iter: 100_000,
            polish: true,
            adaptive_rho: true,
            scaling_iters: 10,
            check_every: 25,
            trace: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("solver settings: {what}")));
        if !(self.rho > 0.0) {
            return bad("rho must be > 0");
        }
        if !(self.sigma > 0.0) {
            return bad("sigma must be > 0");
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return bad("alpha must lie in (0, 2)");
        }
        if !(self.eps_abs >= 0.0 && self.eps_rel >= 0.0) || self.eps_abs + self.eps_rel == 0.0 {
            return bad("tolerances must be >= 0 and not both zero");
        }
        if self.max_iter == 0 || self.check_every == 0 {
            return bad("max_iter and check_every must be positive");
        }
        Ok(())
    }
}

/// `min ½ xᵀPx + cᵀx` over the box `lb ≤ x ≤ ub`.
pub fn solve_box(
    p: DMatrix<f64>,
    c: DVector<f64>,
    lb: DVector<f64>,
    ub: DVector<f64>,
    settings: &SolverSettings,
) -> Result<QpSolution> {
    let d = c.len();
    let problem = QpProblem::new(p, c, DMatrix::identity(d, d), lb, ub)?;
    solve(&problem, settings)
}

#[cfg(test)]
mod tests;
