use nalgebra::{DMatrix, DVector};

use super::admm::{active_signature, residuals};
use super::scaling::Scaled;
use super::{QpProblem, QpSolution, SolveStatus, SolverSettings};

const DELTA: f64 = 1e-7;
const REFINE_STEPS: usize = 5;

/// Solves the KKT system restricted to the active set guessed from the
/// current iterate. Returns `None` if the guess is inconsistent: the linear
/// solve fails, or a multiplier comes out with the wrong sign.
pub(super) fn polish(
    problem: &QpProblem,
    s: &Scaled,
    z: &DVector<f64>,
    y: &DVector<f64>,
    settings: &SolverSettings,
) -> Option<QpSolution> {
    let n = problem.num_vars();
    let signature = active_signature(s, z, y);
    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    let mut sides = Vec::new();
    for (i, &sig) in signature.iter().enumerate() {
        let equality = s.l[i] == s.u[i];
        if equality || sig != 0 {
            rows.push(i);
            bounds.push(if sig > 0 { s.u[i] } else { s.l[i] });
            sides.push(if equality { 0 } else { sig });
        }
    }
    let k = rows.len();
    let dim = n + k;

    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&s.p);
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..n {
            let v = s.a[(i, j)];
            kkt[(n + r, j)] = v;
            kkt[(j, n + r)] = v;
        }
    }
    let exact = kkt.clone();
    for i in 0..n {
        kkt[(i, i)] += DELTA;
    }
    for r in 0..k {
        kkt[(n + r, n + r)] -= DELTA;
    }
    let lu = kkt.lu();

    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&s.c));
    for (r, &b) in bounds.iter().enumerate() {
        rhs[n + r] = b;
    }
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..REFINE_STEPS {
        let resid = &rhs - &exact * &sol;
        let step = lu.solve(&resid)?;
        sol += step;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }

    let x = sol.rows(0, n).into_owned();
    let mut y_full = DVector::zeros(problem.num_constraints());
    for (r, &i) in rows.iter().enumerate() {
        y_full[i] = sol[n + r];
    }
    let ax = &s.a * &x;
    let z_new = DVector::from_fn(ax.len(), |i, _| ax[i].clamp(s.l[i], s.u[i]));
    let res = residuals(s, &x, &z_new, &y_full, settings);

    // wrong-sign multipliers mean the guessed active set is not optimal
    let tol = res.eps_dual;
    for (r, &i) in rows.iter().enumerate() {
        let y_un = y_full[i] * s.e[i] / s.cost_scale;
        let wrong = match sides[r] {
            -1 => y_un > tol,
            1 => y_un < -tol,
            _ => false,
        };
        if wrong {
            return None;
        }
    }
    let x_un = x.component_mul(&s.d);
    let obj = problem.objective(&x_un);
    if !obj.is_finite() {
        return None;
    }

    Some(QpSolution {
        objective: obj,
        x: x_un,
        y: y_full.component_mul(&s.e) / s.cost_scale,
        status: SolveStatus::Solved,
        primal_residual: res.primal,
        dual_residual: res.dual,
        iterations: 0,
        polished: true,
        objective_trace: Vec::new(),
    })
}
