//! Linearized DistFlow sensitivities, the operating cost, and its
//! completed-square form `‖C q_g + y‖²`.

use log::debug;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::topology::{FeederTopology, LineId};
use crate::error::{check_dim, Error, Result};

/// Voltage sensitivities of the linearized DistFlow model, `v ≈ R p + X q + v0 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivities {
    pub r: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

impl Sensitivities {
    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    /// Smallest eigenvalues of `R` and `X`; both are positive on a valid tree.
    pub fn min_eigenvalues(&self) -> (f64, f64) {
        let min = |m: &DMatrix<f64>| SymmetricEigen::new(m.clone()).eigenvalues.min();
        (min(&self.r), min(&self.x))
    }
}

/// `R[m][n]` (resp. `X`) is the total resistance (reactance) shared by the
/// root paths of buses `m` and `n`, i.e. the cumulative impedance from the
/// substation to their lowest common ancestor.
pub fn build_sensitivities(topology: &FeederTopology) -> Sensitivities {
    let n = topology.num_buses();
    let mut cum_r = vec![0.0; n + 1];
    let mut cum_x = vec![0.0; n + 1];
    for &b in topology.bfs_order().iter().skip(1) {
        let l = topology.parent_line(b);
        let p = topology.parent(b);
        cum_r[b] = cum_r[p] + l.r;
        cum_x[b] = cum_x[p] + l.x;
    }
    let mut r = DMatrix::zeros(n, n);
    let mut x = DMatrix::zeros(n, n);
    for i in 1..=n {
        for j in i..=n {
            let a = topology.common_ancestor(i, j);
            r[(i - 1, j - 1)] = cum_r[a];
            r[(j - 1, i - 1)] = cum_r[a];
            x[(i - 1, j - 1)] = cum_x[a];
            x[(j - 1, i - 1)] = cum_x[a];
        }
    }
    Sensitivities { r, x }
}

/// Nodal quantities at one instant, all in p.u. and indexed by `bus - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub p_g: DVector<f64>,
    pub p_c: DVector<f64>,
    pub q_c: DVector<f64>,
    pub q_g: DVector<f64>,
}

impl GridState {
    pub fn new(p_g: DVector<f64>, p_c: DVector<f64>, q_c: DVector<f64>, q_g: DVector<f64>) -> Result<Self> {
        let n = p_g.len();
        check_dim(n, p_c.len(), "p_c")?;
        check_dim(n, q_c.len(), "q_c")?;
        check_dim(n, q_g.len(), "q_g")?;
        if p_g.iter().chain(p_c.iter()).any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Validation("solar generation and active load must be >= 0".into()));
        }
        Ok(Self { p_g, p_c, q_c, q_g })
    }

    /// A state with no generation, load, or inverter output.
    pub fn zeros(n: usize) -> Self {
        Self {
            p_g: DVector::zeros(n),
            p_c: DVector::zeros(n),
            q_c: DVector::zeros(n),
            q_g: DVector::zeros(n),
        }
    }

    /// Net active injection `p_g - p_c`.
    pub fn p(&self) -> DVector<f64> {
        &self.p_g - &self.p_c
    }

    /// Net reactive injection `q_g - q_c`.
    pub fn q(&self) -> DVector<f64> {
        &self.q_g - &self.q_c
    }
}

pub fn voltage_profile(state: &GridState, sens: &Sensitivities, v0: f64) -> Result<DVector<f64>> {
    check_dim(sens.dim(), state.p_g.len(), "grid state")?;
    Ok(&sens.r * state.p() + &sens.x * state.q() + DVector::repeat(sens.dim(), v0))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Validation(format!("lambda must lie in [0, 1], got {lambda}")))
    }
}

/// `λ‖R p + X q‖² + (1 − λ) qᵀ R q`: squared voltage deviation traded
/// against the reactive part of ohmic losses.
pub fn evaluate_cost(state: &GridState, sens: &Sensitivities, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_dim(sens.dim(), state.p_g.len(), "grid state")?;
    let q = state.q();
    let dv = &sens.r * state.p() + &sens.x * &q;
    Ok(lambda * dv.norm_squared() + (1.0 - lambda) * q.dot(&(&sens.r * &q)))
}

/// The matrix `C = [(1 − λ) R + λ X²]^{1/2}` and its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTransform {
    pub lambda: f64,
    pub c: DMatrix<f64>,
    pub c_inv: DMatrix<f64>,
}

impl CostTransform {
    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    /// `Cᵀ C`, the Hessian (up to a factor 2) of `‖C q + y‖²`.
    pub fn ctc(&self) -> DMatrix<f64> {
        self.c.transpose() * &self.c
    }

    /// `‖C q + y‖²`.
    pub fn cost(&self, q_g: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (&self.c * q_g + y).norm_squared()
    }
}

const EIG_FLOOR: f64 = 1e-12;
const EIG_NEGATIVE: f64 = -1e-9;

/// Symmetric PD square root via eigendecomposition, returning `(S, S⁻¹)`.
///
/// Eigenvalues are floored at `1e-12 · λ_max`; any eigenvalue below
/// `-1e-9 · λ_max` is rejected as a non-PSD input.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.max();
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::Numerical(format!("largest eigenvalue {max} is not positive")));
    }
    let min = eig.eigenvalues.min();
    if min < EIG_NEGATIVE * max {
        return Err(Error::Numerical(format!(
            "matrix is not positive semidefinite: eigenvalue {min:e} vs largest {max:e}"
        )));
    }
    let floor = EIG_FLOOR * max;
    if min < floor {
        debug!("flooring eigenvalue {min:e} at {floor:e}");
    }
    let roots = eig.eigenvalues.map(|l| l.max(floor).sqrt());
    let v = &eig.eigenvectors;
    let root = v * DMatrix::from_diagonal(&roots) * v.transpose();
    let inv = v * DMatrix::from_diagonal(&roots.map(|s| 1.0 / s)) * v.transpose();
    Ok((symmetrize(root), symmetrize(inv)))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

pub fn build_cost_transform(sens: &Sensitivities, lambda: f64) -> Result<CostTransform> {
    check_lambda(lambda)?;
    let target = &sens.r * (1.0 - lambda) + (&sens.x * &sens.x) * lambda;
    let (c, c_inv) = spd_sqrt(&target)?;
    Ok(CostTransform { lambda, c, c_inv })
}

/// `y = C⁻¹[−(1−λ) R q_c + λ X R (p_g − p_c) − λ X² q_c]`.
pub fn compute_y(p_g: &[f64], p_c: &[f64], q_c: &[f64], transform: &CostTransform, sens: &Sensitivities) -> Result<DVector<f64>> {
    let n = transform.dim();
    check_dim(n, p_g.len(), "p_g")?;
    check_dim(n, p_c.len(), "p_c")?;
    check_dim(n, q_c.len(), "q_c")?;
    check_dim(n, sens.dim(), "sensitivities")?;
    let lambda = transform.lambda;
    let p = DVector::from_iterator(n, p_g.iter().zip(p_c).map(|(g, c)| g - c));
    let q_c = DVector::from_column_slice(q_c);
    let x_qc = &sens.x * &q_c;
    let inner = (&sens.r * &q_c) * -(1.0 - lambda) + (&sens.x * (&sens.r * p)) * lambda - (&sens.x * x_qc) * lambda;
    Ok(&transform.c_inv * inner)
}

/// Lossless active flow on each requested line: minus the net active
/// injection of the subtree below the line, so power drawn from the
/// substation toward the loads is positive.
pub fn line_flow_features(p_g: &[f64], p_c: &[f64], topology: &FeederTopology, lines: &[LineId]) -> Result<Vec<f64>> {
    let n = topology.num_buses();
    check_dim(n, p_g.len(), "p_g")?;
    check_dim(n, p_c.len(), "p_c")?;
    let children: Vec<usize> = lines.iter().map(|&id| topology.line_child(id)).collect::<Result<_>>()?;
    let subtree = subtree_injections(p_g, p_c, topology);
    Ok(children.into_iter().map(|b| -subtree[b]).collect())
}

/// Net injection summed over the subtree rooted at each bus (index = bus id).
fn subtree_injections(p_g: &[f64], p_c: &[f64], topology: &FeederTopology) -> Vec<f64> {
    let n = topology.num_buses();
    let mut acc = vec![0.0; n + 1];
    for b in 1..=n {
        acc[b] = p_g[b - 1] - p_c[b - 1];
    }
    for &b in topology.bfs_order().iter().skip(1).rev() {
        let p = topology.parent(b);
        acc[p] += acc[b];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::topology::Line;

    fn chain(r: &[f64], x: &[f64]) -> FeederTopology {
        let lines = r
            .iter()
            .zip(x)
            .enumerate()
            .map(|(i, (&r, &x))| Line { from: i, to: i + 1, r, x })
            .collect();
        FeederTopology::new(lines, vec![1.0; r.len()], 1.0).unwrap()
    }

    #[test]
    fn single_line_sensitivities() {
        let s = build_sensitivities(&chain(&[0.1], &[0.2]));
        assert_eq!(s.r[(0, 0)], 0.1);
        assert_eq!(s.x[(0, 0)], 0.2);
    }

    #[test]
    fn nested_chain_sensitivities() {
        let s = build_sensitivities(&chain(&[0.1, 0.3], &[0.1, 0.1]));
        assert_eq!(s.r, DMatrix::from_row_slice(2, 2, &[0.1, 0.1, 0.1, 0.4]));
    }

    #[test]
    fn zero_injection_voltage_is_flat() {
        let t = chain(&[0.1, 0.3], &[0.2, 0.1]);
        let s = build_sensitivities(&t);
        let v = voltage_profile(&GridState::zeros(2), &s, 1.02).unwrap();
        assert_eq!(v, DVector::repeat(2, 1.02));
    }

    #[test]
    fn reactive_only_voltage_is_x_times_q() {
        let t = chain(&[0.1, 0.3], &[0.2, 0.1]);
        let s = build_sensitivities(&t);
        let mut state = GridState::zeros(2);
        state.q_g = DVector::from_vec(vec![0.5, -0.25]);
        let v = voltage_profile(&state, &s, 1.0).unwrap();
        let dv = v - DVector::repeat(2, 1.0);
        assert!((dv - &s.x * &state.q_g).amax() < 1e-15);
    }

    #[test]
    fn cost_special_cases() {
        let t = chain(&[0.1, 0.3], &[0.2, 0.1]);
        let s = build_sensitivities(&t);
        assert_eq!(evaluate_cost(&GridState::zeros(2), &s, 0.5).unwrap(), 0.0);
        let mut state = GridState::zeros(2);
        state.q_g = DVector::from_vec(vec![0.5, -0.25]);
        let q = state.q();
        assert_eq!(evaluate_cost(&state, &s, 0.0).unwrap(), q.dot(&(&s.r * &q)));
        assert!(evaluate_cost(&state, &s, 1.5).is_err());
    }

    #[test]
    fn identity_transform() {
        let s = Sensitivities {
            r: DMatrix::identity(3, 3),
            x: DMatrix::identity(3, 3),
        };
        let t = build_cost_transform(&s, 0.5).unwrap();
        assert!((t.c - DMatrix::<f64>::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn lambda_one_square_root_is_x() {
        let s = build_sensitivities(&chain(&[0.1, 0.3, 0.2], &[0.2, 0.1, 0.4]));
        let t = build_cost_transform(&s, 1.0).unwrap();
        assert!((&t.c - &s.x).amax() < 1e-12 * s.x.amax());
    }

    #[test]
    fn non_psd_input_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(spd_sqrt(&m), Err(Error::Numerical(_))));
    }

    #[test]
    fn y_vanishes_without_injections() {
        let s = build_sensitivities(&chain(&[0.1, 0.3], &[0.2, 0.1]));
        let t = build_cost_transform(&s, 0.5).unwrap();
        let y = compute_y(&[0.0; 2], &[0.0; 2], &[0.0; 2], &t, &s).unwrap();
        assert_eq!(y, DVector::zeros(2));
    }

    #[test]
    fn y_with_pure_voltage_objective_is_r_p() {
        let s = build_sensitivities(&chain(&[0.1, 0.3], &[0.2, 0.1]));
        let t = build_cost_transform(&s, 1.0).unwrap();
        let p_g = [0.4, 0.1];
        let p_c = [0.1, 0.3];
        let y = compute_y(&p_g, &p_c, &[0.0; 2], &t, &s).unwrap();
        let p = DVector::from_vec(vec![0.3, -0.2]);
        assert!((&y - &s.r * &p).amax() < 1e-12);

        let mut state = GridState::zeros(2);
        state.p_g = DVector::from_column_slice(&p_g);
        state.p_c = DVector::from_column_slice(&p_c);
        state.q_g = DVector::from_vec(vec![0.05, -0.1]);
        let v = evaluate_cost(&state, &s, 1.0).unwrap();
        assert!((t.cost(&state.q_g, &y) - v).abs() < 1e-14);
    }

    #[test]
    fn flows_on_a_chain() {
        let t = chain(&[0.1, 0.3], &[0.2, 0.1]);
        let flows = line_flow_features(&[0.0, 0.7], &[0.0, 0.0], &t, &[LineId(0, 1), LineId(1, 2)]).unwrap();
        assert_eq!(flows, vec![-0.7, -0.7]);
        let zero = line_flow_features(&[0.0; 2], &[0.0; 2], &t, &[LineId(0, 1)]).unwrap();
        assert_eq!(zero, vec![0.0]);
        assert!(matches!(
            line_flow_features(&[0.0; 2], &[0.0; 2], &t, &[LineId(0, 2)]),
            Err(Error::UnknownLine(0, 2))
        ));
    }
}
