use nalgebra::{DMatrix, DVector};

use super::{QpProblem, INFINITY_BOUND};

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;

/// Ruiz equilibration of the KKT matrix `[P Aᵀ; A 0]` plus a cost scale.
///
/// The scaled problem has `P̄ = s·DPD`, `c̄ = s·Dc`, `Ā = EAD`, bounds `El`,
/// `Eu`. Unscaled quantities are recovered as `x = D x̄`, `y = E ȳ / s`.
#[derive(Debug, Clone)]
pub(super) struct Scaled {
    pub p: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
    pub d: DVector<f64>,
    pub e: DVector<f64>,
    pub cost_scale: f64,
}

fn clamp_scale(norm: f64) -> f64 {
    if norm < MIN_SCALING {
        1.0
    } else {
        1.0 / norm.min(MAX_SCALING).sqrt()
    }
}

pub(super) fn scale(problem: &QpProblem, iters: usize) -> Scaled {
    let (d_len, m) = (problem.num_vars(), problem.num_constraints());
    let mut p = problem.p.clone();
    let mut c = problem.c.clone();
    let mut a = problem.a.clone();
    let mut d = DVector::from_element(d_len, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let mut cost_scale = 1.0;

    for _ in 0..iters {
        let dt = DVector::from_fn(d_len, |j, _| {
            let col_p = p.column(j).amax();
            let col_a = if m > 0 { a.column(j).amax() } else { 0.0 };
            clamp_scale(col_p.max(col_a))
        });
        let et = DVector::from_fn(m, |i, _| clamp_scale(a.row(i).amax()));
        for j in 0..d_len {
            for i in 0..d_len {
                p[(i, j)] *= dt[i] * dt[j];
            }
            for i in 0..m {
                a[(i, j)] *= et[i] * dt[j];
            }
        }
        c.component_mul_assign(&dt);
        d.component_mul_assign(&dt);
        e.component_mul_assign(&et);

        let mean_col = if d_len > 0 {
            (0..d_len).map(|j| p.column(j).amax()).sum::<f64>() / d_len as f64
        } else {
            0.0
        };
        let gamma = clamp_scale(mean_col.max(c.amax()));
        let gamma = gamma * gamma;
        p *= gamma;
        c *= gamma;
        cost_scale *= gamma;
    }

    let scale_bound = |b: f64, ei: f64| {
        if b.abs() >= INFINITY_BOUND {
            b
        } else {
            (b * ei).clamp(-INFINITY_BOUND, INFINITY_BOUND)
        }
    };
    let l = DVector::from_fn(m, |i, _| scale_bound(problem.l[i], e[i]));
    let u = DVector::from_fn(m, |i, _| scale_bound(problem.u[i], e[i]));
    Scaled {
        p,
        c,
        a,
        l,
        u,
        d,
        e,
        cost_scale,
    }
}
