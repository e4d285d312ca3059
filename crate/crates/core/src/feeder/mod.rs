//! Radial feeder description, linearized voltage sensitivities, and the
//! reactive-power cost in both its physical and completed-square forms.

mod ieee13;
pub mod io;
mod model;
mod topology;

pub use ieee13::{ieee13, IEEE13_BENCHMARK_LOAD, IEEE13_HYBRID_LINES, IEEE13_RATING_RATIO};
pub use model::{
    build_cost_transform, build_sensitivities, compute_y, evaluate_cost, line_flow_features, spd_sqrt,
    voltage_profile, CostTransform, GridState, Sensitivities,
};
pub use topology::{FeederTopology, Line, LineId};

use crate::error::Result;

/// A feeder together with its sensitivities and the cost transform for one λ.
#[derive(Debug, Clone, PartialEq)]
pub struct Feeder {
    pub topology: FeederTopology,
    pub sens: Sensitivities,
    pub transform: CostTransform,
}

impl Feeder {
    pub fn new(topology: FeederTopology, lambda: f64) -> Result<Self> {
        let sens = build_sensitivities(&topology);
        let transform = build_cost_transform(&sens, lambda)?;
        Ok(Self {
            topology,
            sens,
            transform,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.transform.lambda
    }

    pub fn y(&self, p_g: &[f64], p_c: &[f64], q_c: &[f64]) -> Result<nalgebra::DVector<f64>> {
        compute_y(p_g, p_c, q_c, &self.transform, &self.sens)
    }
}
