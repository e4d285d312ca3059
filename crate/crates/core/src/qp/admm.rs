use log::trace;
use nalgebra::{Cholesky, DVector, Dyn};

use super::polish::polish;
use super::scaling::{scale, Scaled};
use super::{QpProblem, QpSolution, SolveStatus, SolverSettings, INFINITY_BOUND};
use crate::error::Result;

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const RHO_ADAPT_RATIO: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Free,
    Inequality,
    Equality,
}

/// Unscaled residuals and the magnitudes their tolerances are relative to.
#[derive(Debug, Clone, Copy)]
pub(super) struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    // scaled-space normalized residuals used by the penalty update
    prim_normalized: f64,
    dual_normalized: f64,
}

impl Residuals {
    pub fn converged(&self) -> bool {
        self.primal <= self.eps_primal && self.dual <= self.eps_dual
    }
}

pub(super) fn residuals(s: &Scaled, x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>, settings: &SolverSettings) -> Residuals {
    let ax = &s.a * x;
    let px = &s.p * x;
    let aty = s.a.tr_mul(y);
    let inv_e = s.e.map(|v| 1.0 / v);
    let inv_d = s.d.map(|v| 1.0 / v);
    let inv_cs = 1.0 / s.cost_scale;

    let primal = (&ax - z).component_mul(&inv_e).amax();
    let ax_norm = ax.component_mul(&inv_e).amax();
    let z_norm = z.component_mul(&inv_e).amax();
    let dual_vec = (&px + &s.c + &aty).component_mul(&inv_d) * inv_cs;
    let dual = dual_vec.amax();
    let px_norm = px.component_mul(&inv_d).amax() * inv_cs;
    let aty_norm = aty.component_mul(&inv_d).amax() * inv_cs;
    let c_norm = s.c.component_mul(&inv_d).amax() * inv_cs;

    let eps_primal = settings.eps_abs + settings.eps_rel * ax_norm.max(z_norm);
    let eps_dual = settings.eps_abs + settings.eps_rel * px_norm.max(aty_norm).max(c_norm);

    let prim_s = (&ax - z).amax() / ax.amax().max(z.amax()).max(1e-30);
    let dual_s = (&px + &s.c + &aty).amax() / px.amax().max(aty.amax()).max(s.c.amax()).max(1e-30);
    Residuals {
        primal,
        dual,
        eps_primal,
        eps_dual,
        prim_normalized: prim_s,
        dual_normalized: dual_s,
    }
}

fn classify(l: &DVector<f64>, u: &DVector<f64>) -> Vec<RowKind> {
    l.iter()
        .zip(u.iter())
        .map(|(&lo, &hi)| {
            if lo <= -INFINITY_BOUND && hi >= INFINITY_BOUND {
                RowKind::Free
            } else if (hi - lo).abs() < 1e-4 * (1.0 + lo.abs().max(hi.abs())) {
                RowKind::Equality
            } else {
                RowKind::Inequality
            }
        })
        .collect()
}

fn rho_vector(kinds: &[RowKind], rho: f64) -> DVector<f64> {
    DVector::from_iterator(
        kinds.len(),
        kinds.iter().map(|k| match k {
            RowKind::Free => RHO_MIN,
            RowKind::Inequality => rho,
            RowKind::Equality => (RHO_EQ_FACTOR * rho).min(RHO_MAX),
        }),
    )
}

fn factor(s: &Scaled, sigma: f64, rho: &DVector<f64>) -> Option<Cholesky<f64, Dyn>> {
    let mut ra = s.a.clone();
    for (i, mut row) in ra.row_iter_mut().enumerate() {
        row *= rho[i];
    }
    let mut k = &s.p + s.a.tr_mul(&ra);
    for i in 0..k.nrows() {
        k[(i, i)] += sigma;
    }
    Cholesky::new(k)
}

fn project(v: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| v[i].clamp(l[i], u[i]))
}

/// Solves `problem` with the given settings. Only invalid settings produce
/// an `Err`; convergence failures are reported through `QpSolution::status`.
pub fn solve(problem: &QpProblem, settings: &SolverSettings) -> Result<QpSolution> {
    settings.validate()?;
    let s = scale(problem, settings.scaling_iters);
    let (n, m) = (problem.num_vars(), problem.num_constraints());
    let kinds = classify(&s.l, &s.u);

    let mut rho_scalar = settings.rho;
    let mut rho = rho_vector(&kinds, rho_scalar);
    let mut x = DVector::zeros(n);
    let mut z = DVector::zeros(m);
    let mut y = DVector::zeros(m);
    let mut trace_obj = Vec::new();
    let mut last_polish_set: Option<Vec<i8>> = None;

    let mut chol = match factor(&s, settings.sigma, &rho) {
        Some(c) => c,
        None => return Ok(failure(problem, &s, &x, &y, 0, trace_obj)),
    };

    let alpha = settings.alpha;
    let mut res = residuals(&s, &x, &z, &y, settings);
    let mut iter = 0;
    while iter < settings.max_iter {
        iter += 1;
        let rhs = &x * settings.sigma - &s.c + s.a.tr_mul(&(rho.component_mul(&z) - &y));
        let x_tilde = chol.solve(&rhs);
        let z_tilde = &s.a * &x_tilde;
        let x_next = &x_tilde * alpha + &x * (1.0 - alpha);
        let z_relaxed = &z_tilde * alpha + &z * (1.0 - alpha);
        let z_next = project(&(&z_relaxed + y.component_div(&rho)), &s.l, &s.u);
        y += rho.component_mul(&(&z_relaxed - &z_next));
        x = x_next;
        z = z_next;

        if settings.trace {
            trace_obj.push(problem.objective(&x.component_mul(&s.d)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Ok(failure(problem, &s, &x, &y, iter, trace_obj));
        }
        if iter % settings.check_every != 0 && iter != settings.max_iter {
            continue;
        }

        res = residuals(&s, &x, &z, &y, settings);
        trace!(
            "iter {iter}: primal {:e} (eps {:e}) dual {:e} (eps {:e}) rho {rho_scalar:e}",
            res.primal, res.eps_primal, res.dual, res.eps_dual
        );
        if res.converged() {
            let mut sol = finish(problem, &s, &x, &y, res, iter, SolveStatus::Solved, trace_obj);
            if settings.polish {
                if let Some(p) = polish(problem, &s, &z, &y, settings) {
                    if p.primal_residual <= res.primal.max(res.eps_primal) && p.dual_residual <= res.dual.max(res.eps_dual) {
                        let trace = std::mem::take(&mut sol.objective_trace);
                        sol = QpSolution { iterations: iter, objective_trace: trace, ..p };
                    }
                }
            }
            return Ok(sol);
        }

        if settings.polish && res.primal <= 1e3 * res.eps_primal.max(1e-10) && res.dual <= 1e3 * res.eps_dual.max(1e-10) {
            let set = active_signature(&s, &z, &y);
            if last_polish_set.as_ref() != Some(&set) {
                if let Some(p) = polish(problem, &s, &z, &y, settings) {
                    if p.primal_residual <= res.eps_primal && p.dual_residual <= res.eps_dual {
                        return Ok(QpSolution {
                            iterations: iter,
                            objective_trace: trace_obj,
                            ..p
                        });
                    }
                }
                last_polish_set = Some(set);
            }
        }

        if settings.adaptive_rho && m > 0 {
            let ratio = (res.prim_normalized / res.dual_normalized.max(1e-30)).sqrt();
            let new_rho = (rho_scalar * ratio).clamp(RHO_MIN, RHO_MAX);
            if new_rho > RHO_ADAPT_RATIO * rho_scalar || new_rho < rho_scalar / RHO_ADAPT_RATIO {
                rho_scalar = new_rho;
                rho = rho_vector(&kinds, rho_scalar);
                chol = match factor(&s, settings.sigma, &rho) {
                    Some(c) => c,
                    None => return Ok(failure(problem, &s, &x, &y, iter, trace_obj)),
                };
            }
        }
    }
    Ok(finish(problem, &s, &x, &y, res, iter, SolveStatus::MaxIter, trace_obj))
}

/// -1 / 0 / +1 per row for lower-active / inactive / upper-active.
pub(super) fn active_signature(s: &Scaled, z: &DVector<f64>, y: &DVector<f64>) -> Vec<i8> {
    (0..z.len())
        .map(|i| {
            if s.l[i] > -INFINITY_BOUND && z[i] - s.l[i] < -y[i] {
                -1
            } else if s.u[i] < INFINITY_BOUND && s.u[i] - z[i] < y[i] {
                1
            } else {
                0
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &QpProblem,
    s: &Scaled,
    x: &DVector<f64>,
    y: &DVector<f64>,
    res: Residuals,
    iterations: usize,
    status: SolveStatus,
    objective_trace: Vec<f64>,
) -> QpSolution {
    let x_un = x.component_mul(&s.d);
    let y_un = y.component_mul(&s.e) / s.cost_scale;
    QpSolution {
        objective: problem.objective(&x_un),
        x: x_un,
        y: y_un,
        status,
        primal_residual: res.primal,
        dual_residual: res.dual,
        iterations,
        polished: false,
        objective_trace,
    }
}

fn failure(problem: &QpProblem, s: &Scaled, x: &DVector<f64>, y: &DVector<f64>, iterations: usize, trace: Vec<f64>) -> QpSolution {
    let res = Residuals {
        primal: f64::INFINITY,
        dual: f64::INFINITY,
        eps_primal: 0.0,
        eps_dual: 0.0,
        prim_normalized: 0.0,
        dual_normalized: 0.0,
    };
    let mut sol = finish(problem, s, x, y, res, iterations, SolveStatus::NumericalFailure, trace);
    if !sol.objective.is_finite() {
        sol.objective = f64::NAN;
    }
    sol
}
