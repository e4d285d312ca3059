use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::feeder::CostTransform;
use crate::qp::{solve_box, SolverSettings};

/// Minimizes `‖C q + y‖²` over the box `|q| ≤ q̄`.
///
/// The solver's answer is clipped into the box so the returned setpoints
/// are exactly feasible.
pub fn optimal_dispatch(
    transform: &CostTransform,
    y: &DVector<f64>,
    q_bar: &[f64],
    settings: &SolverSettings,
) -> Result<DVector<f64>> {
    let n = transform.dim();
    check_dim(n, y.len(), "y")?;
    check_dim(n, q_bar.len(), "reactive limits")?;
    if q_bar.iter().any(|&q| !(q >= 0.0)) {
        return Err(Error::Validation("reactive limits must be >= 0".into()));
    }
    let ct = transform.c.transpose();
    let p = (&ct * &transform.c) * 2.0;
    let c = (&ct * y) * 2.0;
    let ub = DVector::from_column_slice(q_bar);
    let sol = solve_box(p, c, -&ub, ub.clone(), settings)?.into_solved()?;
    Ok(DVector::from_fn(n, |i, _| sol.x[i].clamp(-ub[i], ub[i])))
}
