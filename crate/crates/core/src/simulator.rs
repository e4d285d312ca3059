//! Rolling-horizon comparison of control rules against per-minute optimal
//! dispatch.
//!
//! Every `retrain_period` minutes the kernel rules are retrained on the
//! previous `window` minutes. Each minute of the following period is then
//! evaluated with every method, and costs are averaged per period.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossval::{grid_search, CvGrid, GridPoint};
use crate::error::{Error, Result};
use crate::feeder::{Feeder, FeederTopology};
use crate::io_util::{fmt_num, write_atomic};
use crate::kernels::KernelSpec;
use crate::policy::{optimal_dispatch, project_to_limits, train_policies, PolicySet};
use crate::qp::SolverSettings;
use crate::scenario::{reactive_limits, FeatureSelector, ScenarioRecord, ScenarioWindow};
use crate::seeds::sub_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Optimal,
    KernelGaussian,
    KernelLinear,
    /// Optimal setpoints computed `delay` minutes earlier.
    Stale { delay: u32 },
    Zero,
}

impl Method {
    fn kernel(&self) -> Option<KernelSpec> {
        match self {
            Method::KernelGaussian => Some(KernelSpec::Gaussian { gamma: 1.0 }),
            Method::KernelLinear => Some(KernelSpec::Linear),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Optimal => f.write_str("optimal"),
            Method::KernelGaussian => f.write_str("gaussian"),
            Method::KernelLinear => f.write_str("linear"),
            Method::Stale { delay } => write!(f, "stale:{delay}"),
            Method::Zero => f.write_str("zero"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "optimal" => Ok(Method::Optimal),
            "gaussian" => Ok(Method::KernelGaussian),
            "linear" => Ok(Method::KernelLinear),
            "zero" => Ok(Method::Zero),
            "stale" => Ok(Method::Stale { delay: 5 }),
            _ => match s.strip_prefix("stale:") {
                Some(d) => d
                    .parse()
                    .map(|delay| Method::Stale { delay })
                    .map_err(|_| Error::Validation(format!("bad stale delay in {s:?}"))),
                None => Err(Error::Validation(format!(
                    "unknown method {s:?} (expected optimal, gaussian, linear, stale[:minutes] or zero)"
                ))),
            },
        }
    }
}

/// Parses a comma-separated method list such as `optimal,gaussian,stale:5`.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let methods = s.split(',').map(str::parse).collect::<Result<Vec<Method>>>()?;
    if methods.is_empty() {
        return Err(Error::Validation("no methods given".into()));
    }
    Ok(methods)
}

/// How the kernel rules pick `μ` and the kernel width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Tuning {
    Fixed { mu: f64, gamma_multiplier: f64 },
    /// Grid search on every training window, or only on the first one.
    CrossValidate { grid: CvGrid, once: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Training scenarios (minutes) per window.
    pub window: usize,
    pub retrain_period: u32,
    pub lambda: f64,
    pub methods: Vec<Method>,
    pub selector: FeatureSelector,
    /// Evaluated minutes are `start_min..end_min`.
    pub start_min: u32,
    pub end_min: u32,
    pub tuning: Tuning,
    pub jitter: f64,
    pub seed: u64,
    pub solver: SolverSettings,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            window: 30,
            retrain_period: 30,
            lambda: 0.5,
            methods: vec![
                Method::Optimal,
                Method::KernelGaussian,
                Method::KernelLinear,
                Method::Stale { delay: 5 },
                Method::Zero,
            ],
            selector: FeatureSelector::Local,
            start_min: 11 * 60,
            end_min: 18 * 60,
            tuning: Tuning::CrossValidate {
                grid: CvGrid::default(),
                once: false,
            },
            jitter: crate::policy::DEFAULT_JITTER,
            seed: 0,
            solver: SolverSettings::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self, topology: &FeederTopology) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Validation("training window must be >= 1".into()));
        }
        if self.retrain_period == 0 {
            return Err(Error::Validation("retrain period must be >= 1 minute".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Validation(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.start_min >= self.end_min {
            return Err(Error::Validation("empty simulation horizon".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Validation("no methods to simulate".into()));
        }
        if let Tuning::CrossValidate { grid, .. } = &self.tuning {
            grid.validate()?;
            if grid.folds > self.window {
                return Err(Error::Validation(format!(
                    "{} folds need at least as many training scenarios, window is {}",
                    grid.folds, self.window
                )));
            }
        }
        if let Tuning::Fixed { mu, gamma_multiplier } = self.tuning {
            if !(mu > 0.0 && gamma_multiplier > 0.0) {
                return Err(Error::Validation("fixed mu and gamma multiplier must be > 0".into()));
            }
        }
        self.solver.validate()?;
        self.selector.validate(topology)
    }

    /// Methods in report order; optimal dispatch is always included.
    pub fn report_methods(&self) -> Vec<Method> {
        let mut out = vec![Method::Optimal];
        for m in &self.methods {
            if !out.contains(m) {
                out.push(*m);
            }
        }
        out
    }

    fn history_needed(&self) -> u32 {
        let delay = self
            .methods
            .iter()
            .filter_map(|m| match m {
                Method::Stale { delay } => Some(*delay),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        (self.window as u32).max(delay)
    }
}

/// One row of the gap report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub interval_start_min: u32,
    pub method: Method,
    pub avg_cost: f64,
    pub gap_to_optimal: f64,
}

/// The `(μ, γ)` a kernel method used for one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub interval_start_min: u32,
    pub method: Method,
    pub mu: f64,
    pub gamma_multiplier: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub rows: Vec<MethodResult>,
    pub selections: Vec<Selection>,
    /// Steps evaluated and steps dropped after a solver failure.
    pub steps: usize,
    pub excluded_steps: usize,
    /// Largest `|q_n| − q̄_n` over every applied setpoint.
    pub max_limit_violation: f64,
    /// Smallest per-step cost gap of any method to optimal dispatch.
    pub min_step_gap: f64,
}

impl SimulationResult {
    pub fn gap(&self, interval_start_min: u32, method: Method) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.interval_start_min == interval_start_min && r.method == method)
            .map(|r| r.gap_to_optimal)
    }

    pub fn interval_starts(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.rows.iter().map(|r| r.interval_start_min).collect();
        s.dedup();
        s
    }
}

struct MinuteData {
    limits: Vec<f64>,
    y: DVector<f64>,
    optimal: Option<DVector<f64>>,
}

/// Runs the rolling-horizon comparison over `records` (one record per minute).
pub fn run_simulation(
    topology: &FeederTopology,
    records: &[ScenarioRecord],
    config: &SimulationConfig,
) -> Result<SimulationResult> {
    config.validate(topology)?;
    let feeder = Feeder::new(topology.clone(), config.lambda)?;
    let n = topology.num_buses();
    let by_minute: HashMap<u32, &ScenarioRecord> = records.iter().map(|r| (r.minute, r)).collect();
    if let Some(r) = records.iter().find(|r| r.num_buses() != n) {
        return Err(Error::Dimension {
            expected: n,
            found: r.num_buses(),
            context: "scenario record",
        });
    }

    let first = records.iter().map(|r| r.minute).min().unwrap_or(u32::MAX);
    let history = config.history_needed();
    let start = config.start_min.max(first.saturating_add(history));
    if start > config.start_min {
        warn!("not enough history before minute {}; reporting starts at minute {start}", config.start_min);
    }
    if start >= config.end_min {
        return Err(Error::Validation(format!(
            "insufficient history: need {history} minutes before the first evaluated minute"
        )));
    }
    let lo = start - history;
    for m in lo..config.end_min {
        if !by_minute.contains_key(&m) {
            return Err(Error::Validation(format!("insufficient history: no data for minute {m}")));
        }
    }

    // Optimal dispatch for every minute any method may look at.
    let minutes: Vec<u32> = (lo..config.end_min).collect();
    let data: Vec<MinuteData> = minutes
        .par_iter()
        .map(|m| {
            let r = by_minute[m];
            let limits = reactive_limits(r, topology)?;
            let y = feeder.y(&r.p_g, &r.p_c, &r.q_c)?;
            let optimal = match optimal_dispatch(&feeder.transform, &y, &limits, &config.solver) {
                Ok(q) => Some(q),
                Err(Error::Solver(msg)) => {
                    warn!("optimal dispatch failed at minute {m}: {msg}");
                    None
                }
                Err(e) => return Err(e),
            };
            Ok(MinuteData { limits, y, optimal })
        })
        .collect::<Result<_>>()?;
    let at = |m: u32| &data[(m - lo) as usize];

    let methods = config.report_methods();
    let kernel_methods: Vec<Method> = methods.iter().copied().filter(|m| m.kernel().is_some()).collect();
    let mut fixed_points: HashMap<Method, GridPoint> = HashMap::new();
    if let Tuning::Fixed { mu, gamma_multiplier } = config.tuning {
        for m in &kernel_methods {
            let g = matches!(m, Method::KernelGaussian).then_some(gamma_multiplier);
            fixed_points.insert(*m, GridPoint { mu, gamma_multiplier: g });
        }
    }

    let mut rows = Vec::new();
    let mut selections = Vec::new();
    let mut steps = 0;
    let mut excluded = 0;
    let mut max_violation = f64::NEG_INFINITY;
    let mut min_gap = f64::INFINITY;

    let mut interval_start = start;
    let mut interval_index = 0u64;
    while interval_start < config.end_min {
        let interval_end = (interval_start + config.retrain_period).min(config.end_min);
        let window_records: Vec<ScenarioRecord> = (interval_start - config.window as u32..interval_start)
            .map(|m| by_minute[&m].clone())
            .collect();
        let window = ScenarioWindow::new(window_records, topology, &config.selector)?;

        let trained: Vec<(Method, Option<(PolicySet, GridPoint)>)> = kernel_methods
            .par_iter()
            .map(|&method| {
                let kernel = method.kernel().expect("kernel method");
                let point = match (&config.tuning, fixed_points.get(&method)) {
                    (_, Some(p)) => *p,
                    (Tuning::CrossValidate { grid, .. }, None) => {
                        let seed = sub_seed(config.seed, &format!("cv/{method}"), interval_index);
                        match grid_search(&window, grid, kernel, &feeder, &config.solver, seed) {
                            Ok(out) => out.best,
                            Err(Error::Solver(msg)) => {
                                warn!("cross-validation failed for {method} at minute {interval_start}: {msg}");
                                return Ok((method, None));
                            }
                            Err(e) => return Err(e),
                        }
                    }
                    (Tuning::Fixed { .. }, None) => unreachable!("fixed points cover every kernel method"),
                };
                let mut cfg = point.training_config(kernel, &config.solver);
                cfg.jitter = config.jitter;
                match train_policies(&window, &feeder.transform, &feeder.sens, &cfg) {
                    Ok(out) => Ok((method, Some((out.policies, point)))),
                    Err(Error::Solver(msg)) => {
                        warn!("training failed for {method} at minute {interval_start}: {msg}");
                        Ok((method, None))
                    }
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;

        for (method, t) in &trained {
            if let Some((_, point)) = t {
                selections.push(Selection {
                    interval_start_min: interval_start,
                    method: *method,
                    mu: point.mu,
                    gamma_multiplier: point.gamma_multiplier,
                });
                if matches!(config.tuning, Tuning::CrossValidate { once: true, .. }) {
                    fixed_points.entry(*method).or_insert(*point);
                }
            }
        }
        let policies: HashMap<Method, Option<&PolicySet>> =
            trained.iter().map(|(m, t)| (*m, t.as_ref().map(|(p, _)| p))).collect();

        let mut sums = vec![0.0; methods.len()];
        let mut used = 0usize;
        'minute: for minute in interval_start..interval_end {
            let d = at(minute);
            let record = by_minute[&minute];
            let Some(q_opt) = &d.optimal else {
                excluded += 1;
                continue;
            };
            let mut costs = Vec::with_capacity(methods.len());
            for method in &methods {
                let q = match method {
                    Method::Optimal => q_opt.clone(),
                    Method::Zero => DVector::zeros(n),
                    Method::Stale { delay } => match &at(minute - delay).optimal {
                        Some(old) => DVector::from_fn(n, |i, _| project_to_limits(old[i], d.limits[i])),
                        None => {
                            excluded += 1;
                            continue 'minute;
                        }
                    },
                    Method::KernelGaussian | Method::KernelLinear => match policies[method] {
                        Some(set) => set.dispatch(record, topology)?,
                        None => {
                            excluded += 1;
                            continue 'minute;
                        }
                    },
                };
                for (qi, lim) in q.iter().zip(&d.limits) {
                    max_violation = max_violation.max(qi.abs() - lim);
                }
                costs.push(feeder.transform.cost(&q, &d.y));
            }
            for (k, c) in costs.iter().enumerate() {
                min_gap = min_gap.min(c - costs[0]);
                sums[k] += c;
            }
            used += 1;
        }
        steps += used;

        if used == 0 {
            warn!("every step of the interval starting at minute {interval_start} was excluded");
        } else {
            let opt = sums[0] / used as f64;
            for (k, method) in methods.iter().enumerate() {
                let avg = sums[k] / used as f64;
                rows.push(MethodResult {
                    interval_start_min: interval_start,
                    method: *method,
                    avg_cost: avg,
                    gap_to_optimal: avg - opt,
                });
            }
        }
        info!("interval starting at minute {interval_start}: {used} steps");
        interval_start = interval_end;
        interval_index += 1;
    }

    Ok(SimulationResult {
        rows,
        selections,
        steps,
        excluded_steps: excluded,
        max_limit_violation: max_violation,
        min_step_gap: min_gap,
    })
}

/// CSV with header `interval_start_min,method,avg_cost,gap_to_optimal`.
pub fn cost_gap_csv(result: &SimulationResult) -> String {
    let mut out = String::from("interval_start_min,method,avg_cost,gap_to_optimal\n");
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.interval_start_min,
            r.method,
            fmt_num(r.avg_cost),
            fmt_num(r.gap_to_optimal)
        );
    }
    out
}

pub fn cost_gap_report(result: &SimulationResult, path: &Path) -> Result<()> {
    write_atomic(path, cost_gap_csv(result).as_bytes())
}
