//! Kernel functions defining the function families control rules are drawn from.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// `Linear`: `zᵀz'`. `Polynomial`: `(zᵀz' + γ)^β`. `Gaussian`: `exp(−‖z − z'‖² / γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Polynomial { beta: u32, gamma: f64 },
    Gaussian { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { beta, gamma } if beta >= 1 && gamma >= 0.0 && gamma.is_finite() => Ok(()),
            KernelSpec::Gaussian { gamma } if gamma > 0.0 && gamma.is_finite() => Ok(()),
            other => Err(Error::Validation(format!("invalid kernel parameters {other}"))),
        }
    }

    /// Scale-sensitive kernels see standardized features; the linear kernel
    /// sees raw features so linear rules stay affine in the measurements.
    pub fn standardizes_inputs(&self) -> bool {
        !matches!(self, KernelSpec::Linear)
    }

    /// Same family with a different width (no-op for the linear kernel).
    pub fn with_gamma(self, gamma: f64) -> Self {
        match self {
            KernelSpec::Linear => KernelSpec::Linear,
            KernelSpec::Polynomial { beta, .. } => KernelSpec::Polynomial { beta, gamma },
            KernelSpec::Gaussian { .. } => KernelSpec::Gaussian { gamma },
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            KernelSpec::Linear => None,
            KernelSpec::Polynomial { gamma, .. } | KernelSpec::Gaussian { gamma } => Some(gamma),
        }
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, z: &[f64], w: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(z, w),
            KernelSpec::Polynomial { beta, gamma } => (dot(z, w) + gamma).powi(beta as i32),
            KernelSpec::Gaussian { gamma } => {
                let d2: f64 = z.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / gamma).exp()
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Polynomial { beta, gamma } => write!(f, "poly:{beta},{gamma}"),
            KernelSpec::Gaussian { gamma } => write!(f, "gaussian:{gamma}"),
        }
    }
}

/// Parses `linear`, `poly:<beta>,<gamma>` or `gaussian:<gamma>`.
impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("cannot parse kernel `{s}`"));
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let spec = match name.trim() {
            "linear" if args.is_empty() => KernelSpec::Linear,
            "poly" | "polynomial" => {
                let (b, g) = args.split_once(',').ok_or_else(bad)?;
                KernelSpec::Polynomial {
                    beta: b.trim().parse().map_err(|_| bad())?,
                    gamma: g.trim().parse().map_err(|_| bad())?,
                }
            }
            "gaussian" => KernelSpec::Gaussian {
                gamma: args.trim().parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn eval(spec: &KernelSpec, z: &[f64], w: &[f64]) -> Result<f64> {
    check_dim(z.len(), w.len(), "kernel arguments")?;
    Ok(spec.eval_unchecked(z, w))
}

fn check_inputs(inputs: &[Vec<f64>]) -> Result<usize> {
    let dim = inputs.first().map_or(0, Vec::len);
    for z in inputs {
        check_dim(dim, z.len(), "feature vector")?;
    }
    Ok(dim)
}

/// `K[t][t'] = k(z_t, z_t') + jitter·1{t = t'}`.
pub fn gram_matrix(spec: &KernelSpec, inputs: &[Vec<f64>], jitter: f64) -> Result<DMatrix<f64>> {
    check_inputs(inputs)?;
    if !(jitter >= 0.0) {
        return Err(Error::Validation(format!("jitter must be >= 0, got {jitter}")));
    }
    let t = inputs.len();
    let mut k = DMatrix::zeros(t, t);
    for i in 0..t {
        k[(i, i)] = spec.eval_unchecked(&inputs[i], &inputs[i]) + jitter;
        for j in 0..i {
            let v = spec.eval_unchecked(&inputs[i], &inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// `[k(z, z_1), …, k(z, z_T)]`.
pub fn kernel_vector(spec: &KernelSpec, inputs: &[Vec<f64>], z: &[f64]) -> Result<DVector<f64>> {
    for zi in inputs {
        check_dim(zi.len(), z.len(), "feature vector")?;
    }
    Ok(DVector::from_iterator(inputs.len(), inputs.iter().map(|zi| spec.eval_unchecked(z, zi))))
}

/// Squared RKHS norm `aᵀ K a` of `Σ_t a_t k(·, z_t)`.
pub fn rkhs_norm_sq(spec: &KernelSpec, inputs: &[Vec<f64>], a: &[f64]) -> Result<f64> {
    check_dim(inputs.len(), a.len(), "coefficients")?;
    let k = gram_matrix(spec, inputs, 0.0)?;
    let a = DVector::from_column_slice(a);
    Ok(a.dot(&(k * &a)))
}

/// Median of `‖z_i − z_j‖²` over pairs `i < j` with nonzero distance, or
/// `None` when all inputs coincide.
pub fn median_pairwise_sq_distance(inputs: &[Vec<f64>]) -> Option<f64> {
    let mut d: Vec<f64> = Vec::with_capacity(inputs.len() * inputs.len().saturating_sub(1) / 2);
    for i in 0..inputs.len() {
        for j in 0..i {
            let v: f64 = inputs[i].iter().zip(&inputs[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            if v > 0.0 {
                d.push(v);
            }
        }
    }
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    Some(if d.len() % 2 == 1 { d[mid] } else { 0.5 * (d[mid - 1] + d[mid]) })
}
