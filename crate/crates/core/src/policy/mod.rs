//! Control rules: per-scenario optimal dispatch, joint kernel-based rule
//! training, rule evaluation with projection onto the current limits, and
//! policy files.

mod dispatch;
mod file;
mod rule;
mod training;

pub use dispatch::optimal_dispatch;
pub use file::{load_policies, policies_from_json, policies_to_json, save_policies, POLICY_FORMAT, POLICY_SCHEMA_VERSION};
pub use rule::{evaluate_policy, project_to_limits, InverterPolicy, PolicySet};
pub use training::{
    assemble_training_qp, train_policies, training_problem, TrainingConfig, TrainingOutcome, TrainingProblem,
    DEFAULT_JITTER,
};
