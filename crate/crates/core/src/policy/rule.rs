use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::feeder::FeederTopology;
use crate::kernels::KernelSpec;
use crate::scenario::{reactive_limits, select_features, FeatureSelector, FeatureStandardizer, ScenarioRecord};

/// Control rule of one inverter: `q(z) = Σ_t k(z, z_t) a_t + b`, with `z`
/// standardized first when a standardizer is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverterPolicy {
    pub bus: usize,
    pub kernel: KernelSpec,
    pub standardizer: Option<FeatureStandardizer>,
    /// Training inputs in kernel space (standardized when applicable).
    pub training_inputs: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    pub b: f64,
}

impl InverterPolicy {
    pub fn input_dim(&self) -> usize {
        self.training_inputs.first().map_or(0, Vec::len)
    }

    /// Unprojected reactive setpoint for raw measurements `z`.
    pub fn evaluate(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.input_dim(), z.len(), "policy input")?;
        let owned;
        let z = match &self.standardizer {
            Some(s) => {
                owned = s.apply(z);
                &owned[..]
            }
            None => z,
        };
        Ok(self
            .training_inputs
            .iter()
            .zip(&self.a)
            .map(|(zt, at)| self.kernel.eval_unchecked(z, zt) * at)
            .sum::<f64>()
            + self.b)
    }
}

pub fn evaluate_policy(policy: &InverterPolicy, z: &[f64]) -> Result<f64> {
    policy.evaluate(z)
}

/// Clips `q` into `[−q̄, q̄]`.
pub fn project_to_limits(q: f64, q_bar: f64) -> f64 {
    q.min(q_bar).max(-q_bar)
}

/// Rules for every inverter of a feeder plus the context they were trained in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySet {
    pub lambda: f64,
    pub mu: f64,
    pub selector: FeatureSelector,
    pub training_minutes: Vec<u32>,
    pub policies: Vec<InverterPolicy>,
}

impl PolicySet {
    /// Projected setpoints for all buses (`bus - 1` indexing) under the
    /// conditions in `record`; buses without a rule get 0.
    pub fn dispatch(&self, record: &ScenarioRecord, topology: &FeederTopology) -> Result<DVector<f64>> {
        let limits = reactive_limits(record, topology)?;
        let mut q = DVector::zeros(topology.num_buses());
        for p in &self.policies {
            let z = select_features(record, &limits, &self.selector, topology, p.bus)?;
            q[p.bus - 1] = project_to_limits(p.evaluate(&z)?, limits[p.bus - 1]);
        }
        Ok(q)
    }

    pub fn buses(&self) -> Vec<usize> {
        self.policies.iter().map(|p| p.bus).collect()
    }
}
