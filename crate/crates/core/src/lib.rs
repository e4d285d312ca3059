//! Kernel-based reactive power control rules for smart inverters.
//!
//! The crate designs one control rule per inverter on a radial distribution
//! feeder. Rules are trained jointly from a window of recent load and solar
//! scenarios by solving a single linearly constrained quadratic program, and
//! are then evaluated locally on fresh measurements until the next retrain.
//!
//! Module map:
//!
//! * [`feeder`]: topology, voltage sensitivities, cost and its square-root form.
//! * [`scenario`]: time series ingestion and synthesis, reactive limits, features.
//! * [`qp`]: operator-splitting solver for convex QPs with two-sided linear constraints.
//! * [`kernels`]: kernel functions and Gram matrices.
//! * [`policy`]: optimal dispatch, joint rule training, rule evaluation, policy files.
//! * [`crossval`]: k-fold selection of the regularization weight and kernel width.
//! * [`simulator`]: rolling-horizon comparison against optimal and stale dispatch.

pub mod crossval;
pub mod error;
pub mod feeder;
pub mod io_util;
pub mod kernels;
pub mod policy;
pub mod qp;
pub mod scenario;
pub mod seeds;
pub mod simulator;

pub use error::{Error, Result};
