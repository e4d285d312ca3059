//! Joint training of all inverter rules as one quadratic program.
//!
//! With rules in representer form, inverter `n`'s injections over the `T`
//! training scenarios are `q_n = K_n a_n + b_n 1 = E_n x_n` where
//! `E_n = [K_n 1]` and `x_n = [a_n; b_n]`. The training objective
//!
//! ```text
//! (1/T) Σ_t ‖C q_t + y_t‖² + μ Σ_n a_nᵀ K_n a_n
//! ```
//!
//! couples inverters only through `W = CᵀC`: the Hessian block for the pair
//! `(n, m)` is `(2/T) W[n][m] E_nᵀ E_m`, plus `2μ K_n` on the `a_n` block.
//! The apparent power limits become `−q̄_n ≤ E_n x_n ≤ q̄_n`.

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::rule::{InverterPolicy, PolicySet};
use crate::error::{check_dim, Error, Result};
use crate::feeder::{compute_y, CostTransform, Sensitivities};
use crate::kernels::{gram_matrix, median_pairwise_sq_distance, KernelSpec};
use crate::qp::{solve, QpProblem, QpSolution, SolverSettings};
use crate::scenario::{FeatureStandardizer, ScenarioWindow};

/// Diagonal jitter added to the Gram matrices inside the regularizer.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// Data of the training QP before it is flattened into matrix form.
#[derive(Debug, Clone)]
pub struct TrainingProblem {
    /// `C` of the cost transform (`N×N`).
    pub c: DMatrix<f64>,
    /// Column `t` is `y_t` (`N×T`).
    pub y: DMatrix<f64>,
    /// Matrix row (`bus - 1`) of each inverter.
    pub rows: Vec<usize>,
    /// `T×T` Gram matrix of each inverter.
    pub grams: Vec<DMatrix<f64>>,
    /// Reactive limits of each inverter over the `T` scenarios.
    pub limits: Vec<DVector<f64>>,
    pub mu: f64,
    pub jitter: f64,
}

impl TrainingProblem {
    pub fn num_scenarios(&self) -> usize {
        self.y.ncols()
    }

    fn validate(&self) -> Result<()> {
        let (n, t) = (self.c.nrows(), self.num_scenarios());
        check_dim(n, self.c.ncols(), "C columns")?;
        check_dim(n, self.y.nrows(), "Y rows")?;
        check_dim(self.rows.len(), self.grams.len(), "Gram matrices")?;
        check_dim(self.rows.len(), self.limits.len(), "limit vectors")?;
        if t == 0 {
            return Err(Error::Validation("training needs at least one scenario".into()));
        }
        for (k, g) in self.grams.iter().enumerate() {
            check_dim(t, g.nrows(), "Gram rows")?;
            check_dim(t, g.ncols(), "Gram columns")?;
            check_dim(t, self.limits[k].len(), "limits")?;
            if self.rows[k] >= n {
                return Err(Error::Validation(format!("inverter row {} outside 0..{n}", self.rows[k])));
            }
        }
        if !(self.mu >= 0.0 && self.jitter >= 0.0) {
            return Err(Error::Validation("mu and jitter must be >= 0".into()));
        }
        Ok(())
    }

    /// `(1/T) ‖Y‖²_F`, the objective of the all-zero policy.
    pub fn constant_term(&self) -> f64 {
        self.y.norm_squared() / self.num_scenarios() as f64
    }

    /// Injections `q_n = K_n a_n + b_n 1` for every inverter, read off `x`.
    pub fn injections(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        let t = self.num_scenarios();
        self.grams
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let off = k * (t + 1);
                g * x.rows(off, t) + DVector::repeat(t, x[off + t])
            })
            .collect()
    }

    /// `(1/T) ‖C Q + Y‖²_F` for per-inverter injections.
    pub fn fit_term(&self, injections: &[DVector<f64>]) -> f64 {
        let t = self.num_scenarios();
        let mut q = DMatrix::zeros(self.c.nrows(), t);
        for (k, inj) in injections.iter().enumerate() {
            q.row_mut(self.rows[k]).copy_from(&inj.transpose());
        }
        (&self.c * q + &self.y).norm_squared() / t as f64
    }

    /// `μ Σ_n a_nᵀ K_n a_n` (without jitter).
    pub fn regularizer(&self, x: &DVector<f64>) -> f64 {
        let t = self.num_scenarios();
        self.grams
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let a = x.rows(k * (t + 1), t);
                a.dot(&(g * a))
            })
            .sum::<f64>()
            * self.mu
    }
}

/// Flattens the training problem over `x = [a_1; b_1; …; a_K; b_K]`.
///
/// The QP objective omits the constant `(1/T)‖Y‖²_F`; see
/// [`TrainingProblem::constant_term`].
pub fn assemble_training_qp(tp: &TrainingProblem) -> Result<QpProblem> {
    tp.validate()?;
    let t = tp.num_scenarios();
    let k = tp.rows.len();
    let block = t + 1;
    let d = k * block;
    let scale = 2.0 / t as f64;
    let w = tp.c.transpose() * &tp.c;
    let cy = tp.c.transpose() * &tp.y;

    let ones = DVector::repeat(t, 1.0);
    let col_sums: Vec<DVector<f64>> = tp.grams.iter().map(|g| g.tr_mul(&ones)).collect();

    let mut p = DMatrix::zeros(d, d);
    for i in 0..k {
        for j in 0..=i {
            let wij = w[(tp.rows[i], tp.rows[j])] * scale;
            if wij == 0.0 {
                continue;
            }
            // E_iᵀ E_j = [K_iᵀK_j, K_iᵀ1; 1ᵀK_j, T]
            let kk = tp.grams[i].tr_mul(&tp.grams[j]);
            let (oi, oj) = (i * block, j * block);
            for r in 0..t {
                for c in 0..t {
                    p[(oi + r, oj + c)] += wij * kk[(r, c)];
                }
                p[(oi + r, oj + t)] += wij * col_sums[i][r];
                p[(oi + t, oj + r)] += wij * col_sums[j][r];
            }
            p[(oi + t, oj + t)] += wij * t as f64;
        }
    }
    // mirror the lower triangle of blocks
    for i in 0..k {
        for j in 0..i {
            let (oi, oj) = (i * block, j * block);
            for r in 0..block {
                for c in 0..block {
                    p[(oj + c, oi + r)] = p[(oi + r, oj + c)];
                }
            }
        }
    }
    for (i, g) in tp.grams.iter().enumerate() {
        let o = i * block;
        for r in 0..t {
            for c in 0..t {
                p[(o + r, o + c)] += 2.0 * tp.mu * g[(r, c)];
            }
            p[(o + r, o + r)] += 2.0 * tp.mu * tp.jitter;
        }
    }

    let mut c = DVector::zeros(d);
    for (i, g) in tp.grams.iter().enumerate() {
        let v = cy.row(tp.rows[i]).transpose() * scale;
        let o = i * block;
        c.rows_mut(o, t).copy_from(&g.tr_mul(&v));
        c[o + t] = v.sum();
    }

    let mut a = DMatrix::zeros(k * t, d);
    let mut l = DVector::zeros(k * t);
    let mut u = DVector::zeros(k * t);
    for (i, g) in tp.grams.iter().enumerate() {
        let (ro, co) = (i * t, i * block);
        a.view_mut((ro, co), (t, t)).copy_from(g);
        for r in 0..t {
            a[(ro + r, co + t)] = 1.0;
            l[ro + r] = -tp.limits[i][r];
            u[ro + r] = tp.limits[i][r];
        }
    }
    QpProblem::new(p, c, a, l, u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub kernel: KernelSpec,
    /// When set, each inverter's kernel width becomes this multiple of the
    /// median pairwise squared distance of its (standardized) training
    /// features, overriding the width in `kernel`.
    pub gamma_multiplier: Option<f64>,
    pub mu: f64,
    pub jitter: f64,
    /// Permits `μ = 0`, which leaves the QP Hessian singular. Test use only.
    pub allow_zero_mu: bool,
    pub solver: SolverSettings,
}

impl TrainingConfig {
    pub fn new(kernel: KernelSpec, mu: f64) -> Self {
        Self {
            kernel,
            gamma_multiplier: None,
            mu,
            jitter: DEFAULT_JITTER,
            allow_zero_mu: false,
            solver: SolverSettings::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.mu < 0.0 || !self.mu.is_finite() {
            return Err(Error::Validation(format!("mu must be >= 0, got {}", self.mu)));
        }
        if self.mu == 0.0 && !self.allow_zero_mu {
            return Err(Error::Validation("mu = 0 requires explicitly allowing an unregularized fit".into()));
        }
        if let Some(m) = self.gamma_multiplier {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Validation(format!("gamma multiplier must be > 0, got {m}")));
            }
        }
        Ok(())
    }
}

/// Result of a training run with the diagnostics used by tests and reports.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub policies: PolicySet,
    /// Full objective `(1/T)‖CQ+Y‖²_F + μ Σ aᵀKa`.
    pub objective: f64,
    pub fit: f64,
    /// Injections of each inverter over the training scenarios.
    pub injections: Vec<DVector<f64>>,
    pub solution: QpSolution,
}

/// Per-inverter kernel (with resolved width), standardizer and kernel-space inputs.
pub(crate) fn kernel_inputs(
    window: &ScenarioWindow,
    cfg: &TrainingConfig,
) -> Result<Vec<(KernelSpec, Option<FeatureStandardizer>, Vec<Vec<f64>>)>> {
    window
        .features
        .iter()
        .map(|raw| {
            let (std, inputs) = if cfg.kernel.standardizes_inputs() {
                let s = FeatureStandardizer::fit(raw)?;
                let z = raw.iter().map(|z| s.apply(z)).collect();
                (Some(s), z)
            } else {
                (None, raw.clone())
            };
            let kernel = match cfg.gamma_multiplier {
                Some(m) if cfg.kernel.gamma().is_some() => {
                    cfg.kernel.with_gamma(m * median_pairwise_sq_distance(&inputs).unwrap_or(1.0))
                }
                _ => cfg.kernel,
            };
            Ok((kernel, std, inputs))
        })
        .collect()
}

/// Builds the training problem for `window` without solving it.
pub fn training_problem(
    window: &ScenarioWindow,
    transform: &CostTransform,
    sens: &Sensitivities,
    grams: Vec<DMatrix<f64>>,
    mu: f64,
    jitter: f64,
) -> Result<TrainingProblem> {
    let n = transform.dim();
    let t = window.len();
    let mut y = DMatrix::zeros(n, t);
    for (j, r) in window.records.iter().enumerate() {
        y.set_column(j, &compute_y(&r.p_g, &r.p_c, &r.q_c, transform, sens)?);
    }
    let limits = window
        .inverter_buses
        .iter()
        .map(|&bus| DVector::from_iterator(t, window.limits.iter().map(|l| l[bus - 1])))
        .collect();
    Ok(TrainingProblem {
        c: transform.c.clone(),
        y,
        rows: window.inverter_buses.iter().map(|b| b - 1).collect(),
        grams,
        limits,
        mu,
        jitter,
    })
}

/// Trains all inverter rules jointly on the scenarios of `window`.
pub fn train_policies(
    window: &ScenarioWindow,
    transform: &CostTransform,
    sens: &Sensitivities,
    cfg: &TrainingConfig,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if window.is_empty() {
        return Err(Error::Validation("cannot train on an empty window".into()));
    }
    let inputs = kernel_inputs(window, cfg)?;
    let grams = inputs
        .iter()
        .map(|(k, _, z)| gram_matrix(k, z, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let tp = training_problem(window, transform, sens, grams, cfg.mu, cfg.jitter)?;
    let qp = assemble_training_qp(&tp)?;
    let solution = solve(&qp, &cfg.solver)?.into_solved()?;
    debug!(
        "trained {} rules on {} scenarios in {} iterations (polished: {})",
        tp.rows.len(),
        tp.num_scenarios(),
        solution.iterations,
        solution.polished
    );

    let t = tp.num_scenarios();
    let injections = tp.injections(&solution.x);
    let fit = tp.fit_term(&injections);
    let objective = fit + tp.regularizer(&solution.x);
    let policies = inputs
        .into_iter()
        .zip(&window.inverter_buses)
        .enumerate()
        .map(|(k, ((kernel, standardizer, training_inputs), &bus))| {
            let off = k * (t + 1);
            InverterPolicy {
                bus,
                kernel,
                standardizer,
                training_inputs,
                a: solution.x.rows(off, t).iter().copied().collect(),
                b: solution.x[off + t],
            }
        })
        .collect();
    Ok(TrainingOutcome {
        policies: PolicySet {
            lambda: transform.lambda,
            mu: cfg.mu,
            selector: window.selector.clone(),
            training_minutes: window.records.iter().map(|r| r.minute).collect(),
            policies,
        },
        objective,
        fit,
        injections,
        solution,
    })
}
