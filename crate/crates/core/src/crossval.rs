//! K-fold cross-validation of the regularization weight and kernel width.
//!
//! Each grid point is scored the way rules are deployed: train on `k − 1`
//! folds, evaluate the rules on the held-out scenarios, project onto the
//! current limits, and average `‖C q + y‖²`.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::Feeder;
use crate::io_util::{fmt_num, write_atomic};
use crate::kernels::KernelSpec;
use crate::policy::{train_policies, TrainingConfig};
use crate::qp::SolverSettings;
use crate::scenario::ScenarioWindow;

/// Splits `0..t` into `k` disjoint folds whose sizes differ by at most one.
pub fn kfold_split(t: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > t {
        return Err(Error::Validation(format!("need 2 <= k <= T for k-fold split, got k={k}, T={t}")));
    }
    let mut idx: Vec<usize> = (0..t).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (t / k, t % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = idx[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvGrid {
    pub mu_values: Vec<f64>,
    /// Kernel widths as multiples of the median pairwise squared distance.
    pub gamma_multipliers: Vec<f64>,
    pub folds: usize,
}

impl Default for CvGrid {
    fn default() -> Self {
        Self {
            mu_values: vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
            gamma_multipliers: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            folds: 5,
        }
    }
}

impl CvGrid {
    pub fn validate(&self) -> Result<()> {
        if self.mu_values.is_empty() || self.gamma_multipliers.is_empty() {
            return Err(Error::Validation("cross-validation grid is empty".into()));
        }
        if self.mu_values.iter().chain(&self.gamma_multipliers).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Validation("grid values must be positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::Validation("need at least 2 folds".into()));
        }
        Ok(())
    }

    /// Points for a kernel family; widths only matter for the Gaussian kernel.
    pub fn points(&self, kernel: &KernelSpec) -> Vec<GridPoint> {
        let widths: Vec<Option<f64>> = match kernel {
            KernelSpec::Gaussian { .. } => self.gamma_multipliers.iter().copied().map(Some).collect(),
            _ => vec![None],
        };
        self.mu_values
            .iter()
            .flat_map(|&mu| widths.iter().map(move |&g| GridPoint { mu, gamma_multiplier: g }))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub mu: f64,
    pub gamma_multiplier: Option<f64>,
}

impl GridPoint {
    pub fn training_config(&self, kernel: KernelSpec, solver: &SolverSettings) -> TrainingConfig {
        TrainingConfig {
            gamma_multiplier: self.gamma_multiplier,
            solver: solver.clone(),
            ..TrainingConfig::new(kernel, self.mu)
        }
    }

    /// Orders candidates for tie-breaking: larger μ, then larger width, wins.
    fn smoother_than(&self, other: &GridPoint) -> bool {
        if self.mu != other.mu {
            return self.mu > other.mu;
        }
        self.gamma_multiplier.unwrap_or(0.0) > other.gamma_multiplier.unwrap_or(0.0)
    }
}

/// Mean held-out cost of rules trained at `point`, over explicit folds.
/// Solver failures score `+∞`.
pub fn cv_score_with_folds(
    window: &ScenarioWindow,
    folds: &[Vec<usize>],
    point: &GridPoint,
    kernel: KernelSpec,
    feeder: &Feeder,
    solver: &SolverSettings,
) -> Result<f64> {
    let cfg = point.training_config(kernel, solver);
    let mut total = 0.0;
    for (f, held_out) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = (0..window.len()).filter(|t| !held_out.contains(t)).collect();
        let train = window.subset(&train_idx);
        let set = match train_policies(&train, &feeder.transform, &feeder.sens, &cfg) {
            Ok(out) => out.policies,
            Err(Error::Solver(msg)) => {
                warn!("cv fold {f} at mu={} gamma={:?}: {msg}", point.mu, point.gamma_multiplier);
                return Ok(f64::INFINITY);
            }
            Err(e) => return Err(e),
        };
        let mut fold_cost = 0.0;
        for &t in held_out {
            let r = &window.records[t];
            let q = set.dispatch(r, &feeder.topology)?;
            let y = feeder.y(&r.p_g, &r.p_c, &r.q_c)?;
            fold_cost += feeder.transform.cost(&q, &y);
        }
        total += fold_cost / held_out.len() as f64;
    }
    Ok(total / folds.len() as f64)
}

/// `cv_score_with_folds` over a seeded k-fold split of the window.
pub fn cv_score(
    window: &ScenarioWindow,
    point: &GridPoint,
    kernel: KernelSpec,
    folds: usize,
    feeder: &Feeder,
    solver: &SolverSettings,
    seed: u64,
) -> Result<f64> {
    let split = kfold_split(window.len(), folds, seed)?;
    cv_score_with_folds(window, &split, point, kernel, feeder, solver)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub best: GridPoint,
    pub scores: Vec<(GridPoint, f64)>,
}

/// Picks the lowest-scoring point; exact ties go to the smoother point.
pub fn select_best(scores: &[(GridPoint, f64)]) -> Result<GridPoint> {
    let mut best: Option<(GridPoint, f64)> = None;
    for &(p, s) in scores {
        if !s.is_finite() {
            continue;
        }
        best = match best {
            None => Some((p, s)),
            Some((bp, bs)) if s < bs || (s == bs && p.smoother_than(&bp)) => Some((p, s)),
            keep => keep,
        };
    }
    best.map(|(p, _)| p)
        .ok_or_else(|| Error::Solver("every cross-validation grid point failed".into()))
}

/// Scores every grid point (in parallel) on the same folds and selects the best.
pub fn grid_search(
    window: &ScenarioWindow,
    grid: &CvGrid,
    kernel: KernelSpec,
    feeder: &Feeder,
    solver: &SolverSettings,
    seed: u64,
) -> Result<CvOutcome> {
    grid.validate()?;
    let folds = kfold_split(window.len(), grid.folds, seed)?;
    let points = grid.points(&kernel);
    let scores = points
        .par_iter()
        .map(|p| cv_score_with_folds(window, &folds, p, kernel, feeder, solver).map(|s| (*p, s)))
        .collect::<Result<Vec<_>>>()?;
    let best = select_best(&scores)?;
    Ok(CvOutcome { best, scores })
}

/// CSV with header `mu,gamma,score`; `gamma` is the width multiplier (empty
/// for kernels without one).
pub fn cv_report_csv(outcome: &CvOutcome) -> String {
    let mut out = String::from("mu,gamma,score\n");
    for (p, s) in &outcome.scores {
        let g = p.gamma_multiplier.map(fmt_num).unwrap_or_default();
        let s = if s.is_finite() { fmt_num(*s) } else { "inf".into() };
        let _ = writeln!(out, "{},{g},{s}", fmt_num(p.mu));
    }
    out
}

pub fn write_cv_report(outcome: &CvOutcome, path: &Path) -> Result<()> {
    write_atomic(path, cv_report_csv(outcome).as_bytes())
}
