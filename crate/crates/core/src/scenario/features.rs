use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use super::records::ScenarioRecord;
use crate::error::{check_dim, Error, Result};
use crate::feeder::{line_flow_features, FeederTopology, LineId};

/// Reactive headroom `√(s̄² − p_g²)` of an inverter; 0 (with a warning) when
/// solar output exceeds the rating.
pub fn reactive_limit(s_bar: f64, p_g: f64) -> Result<f64> {
    if !(s_bar >= 0.0 && p_g >= 0.0) {
        return Err(Error::Validation(format!("reactive limit needs s_bar >= 0 and p_g >= 0, got ({s_bar}, {p_g})")));
    }
    if p_g > s_bar {
        if s_bar > 0.0 {
            warn!("solar output {p_g} exceeds inverter rating {s_bar}; reactive limit clipped to 0");
        }
        return Ok(0.0);
    }
    Ok(((s_bar - p_g) * (s_bar + p_g)).sqrt())
}

/// Limits for every bus (`bus - 1` indexing); buses without an inverter get 0.
pub fn reactive_limits(record: &ScenarioRecord, topology: &FeederTopology) -> Result<Vec<f64>> {
    check_dim(topology.num_buses(), record.num_buses(), "scenario record")?;
    topology
        .ratings()
        .iter()
        .zip(&record.p_g)
        .map(|(&s, &p)| reactive_limit(s, p))
        .collect()
}

/// Which measurements feed each inverter's control rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "lines", rename_all = "lowercase")]
pub enum FeatureSelector {
    /// `[p_g, q̄, p_c, q_c]` at the inverter's own bus.
    Local,
    /// `[p_c; q_c; p_g]` over all buses.
    Global,
    /// Local features followed by active flows on the listed lines.
    Hybrid(Vec<LineId>),
}

impl FeatureSelector {
    pub fn dimension(&self, n_buses: usize) -> usize {
        match self {
            FeatureSelector::Local => 4,
            FeatureSelector::Global => 3 * n_buses,
            FeatureSelector::Hybrid(lines) => 4 + lines.len(),
        }
    }

    pub fn validate(&self, topology: &FeederTopology) -> Result<()> {
        if let FeatureSelector::Hybrid(lines) = self {
            for &l in lines {
                topology.line_child(l)?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for FeatureSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSelector::Local => write!(f, "local"),
            FeatureSelector::Global => write!(f, "global"),
            FeatureSelector::Hybrid(lines) => {
                let list: Vec<String> = lines.iter().map(LineId::to_string).collect();
                write!(f, "hybrid:{}", list.join(","))
            }
        }
    }
}

/// Parses `local`, `global` or `hybrid:<a>-<b>,<c>-<d>,…`.
impl FromStr for FeatureSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "local" => Ok(FeatureSelector::Local),
            None if s == "global" => Ok(FeatureSelector::Global),
            Some(("hybrid", list)) => {
                let lines = list
                    .split(',')
                    .filter(|p| !p.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<Vec<LineId>>>()?;
                Ok(FeatureSelector::Hybrid(lines))
            }
            _ => Err(Error::Validation(format!("cannot parse feature mode `{s}`"))),
        }
    }
}

/// Feature vector of the inverter at `bus` under `selector`.
pub fn select_features(
    record: &ScenarioRecord,
    limits: &[f64],
    selector: &FeatureSelector,
    topology: &FeederTopology,
    bus: usize,
) -> Result<Vec<f64>> {
    let n = topology.num_buses();
    check_dim(n, record.num_buses(), "scenario record")?;
    if bus == 0 || bus > n || topology.rating(bus) <= 0.0 {
        return Err(Error::Validation(format!("bus {bus} has no inverter")));
    }
    let i = bus - 1;
    let local = [record.p_g[i], limits[i], record.p_c[i], record.q_c[i]];
    Ok(match selector {
        FeatureSelector::Local => local.to_vec(),
        FeatureSelector::Global => record
            .p_c
            .iter()
            .chain(&record.q_c)
            .chain(&record.p_g)
            .copied()
            .collect(),
        FeatureSelector::Hybrid(lines) => {
            let mut z = local.to_vec();
            z.extend(line_flow_features(&record.p_g, &record.p_c, topology, lines)?);
            z
        }
    })
}

/// A training window: `T` consecutive scenarios with their reactive limits
/// and per-inverter features.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioWindow {
    pub records: Vec<ScenarioRecord>,
    /// `limits[t][bus - 1]`
    pub limits: Vec<Vec<f64>>,
    pub inverter_buses: Vec<usize>,
    /// `features[k][t]` for the inverter at `inverter_buses[k]`.
    pub features: Vec<Vec<Vec<f64>>>,
    pub selector: FeatureSelector,
}

impl ScenarioWindow {
    pub fn new(records: Vec<ScenarioRecord>, topology: &FeederTopology, selector: &FeatureSelector) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Validation("scenario window is empty".into()));
        }
        selector.validate(topology)?;
        let limits = records
            .iter()
            .map(|r| reactive_limits(r, topology))
            .collect::<Result<Vec<_>>>()?;
        let inverter_buses = topology.inverter_buses();
        let features = inverter_buses
            .iter()
            .map(|&bus| {
                records
                    .iter()
                    .zip(&limits)
                    .map(|(r, l)| select_features(r, l, selector, topology, bus))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            records,
            limits,
            inverter_buses,
            features,
            selector: selector.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sub-window made of the scenarios at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            records: indices.iter().map(|&t| self.records[t].clone()).collect(),
            limits: indices.iter().map(|&t| self.limits[t].clone()).collect(),
            inverter_buses: self.inverter_buses.clone(),
            features: self
                .features
                .iter()
                .map(|f| indices.iter().map(|&t| f[t].clone()).collect())
                .collect(),
            selector: self.selector.clone(),
        }
    }
}

pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension affine standardization fitted on training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStandardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStandardizer {
    /// Population mean and standard deviation; deviations are floored at `STD_FLOOR`.
    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        let first = features
            .first()
            .ok_or_else(|| Error::Validation("cannot standardize an empty feature set".into()))?;
        let dim = first.len();
        let t = features.len() as f64;
        let mut mean = vec![0.0; dim];
        for z in features {
            check_dim(dim, z.len(), "feature vector")?;
            for (m, v) in mean.iter_mut().zip(z) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= t);
        let mut var = vec![0.0; dim];
        for z in features {
            for ((s, v), m) in var.iter_mut().zip(z).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / t).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{Line, IEEE13_HYBRID_LINES};
    use proptest::prelude::*;

    #[test]
    fn limit_examples() {
        assert_eq!(reactive_limit(5.0, 3.0).unwrap(), 4.0);
        assert_eq!(reactive_limit(0.7, 0.0).unwrap(), 0.7);
        assert_eq!(reactive_limit(5.0, 6.0).unwrap(), 0.0);
        assert!(reactive_limit(-1.0, 0.0).is_err());
    }

    fn two_bus() -> FeederTopology {
        let lines = vec![Line { from: 0, to: 1, r: 0.1, x: 0.1 }, Line { from: 1, to: 2, r: 0.1, x: 0.1 }];
        FeederTopology::new(lines, vec![0.5, 0.0], 1.0).unwrap()
    }

    #[test]
    fn local_features() {
        let t = two_bus();
        let r = ScenarioRecord {
            minute: 0,
            p_g: vec![0.3, 0.0],
            p_c: vec![0.2, 0.0],
            q_c: vec![0.1, 0.0],
        };
        let limits = reactive_limits(&r, &t).unwrap();
        let z = select_features(&r, &limits, &FeatureSelector::Local, &t, 1).unwrap();
        assert_eq!(z.len(), 4);
        assert!((z[1] - 0.4).abs() < 1e-15);
        assert_eq!([z[0], z[2], z[3]], [0.3, 0.2, 0.1]);
        assert!(select_features(&r, &limits, &FeatureSelector::Local, &t, 2).is_err());
    }

    #[test]
    fn global_ordering() {
        let t = two_bus();
        let r = ScenarioRecord {
            minute: 0,
            p_g: vec![1.0, 2.0],
            p_c: vec![3.0, 4.0],
            q_c: vec![5.0, 6.0],
        };
        let z = select_features(&r, &[0.0, 0.0], &FeatureSelector::Global, &t, 1).unwrap();
        assert_eq!(z, vec![3.0, 4.0, 5.0, 6.0, 1.0, 2.0]);
    }

    #[test]
    fn hybrid_dimension() {
        let t = crate::feeder::ieee13();
        let sel = FeatureSelector::Hybrid(IEEE13_HYBRID_LINES.iter().map(|&(a, b)| LineId(a, b)).collect());
        let r = ScenarioRecord::zeros(0, 12);
        let limits = reactive_limits(&r, &t).unwrap();
        let z = select_features(&r, &limits, &sel, &t, 1).unwrap();
        assert_eq!(z.len(), 7);
        assert_eq!(sel.dimension(12), 7);
        assert_eq!(sel.to_string().parse::<FeatureSelector>().unwrap(), sel);
    }

    #[test]
    fn constant_dimension_standardizes_to_zero() {
        let f = vec![vec![1.0, 2.0], vec![1.0, 4.0], vec![1.0, 9.0]];
        let s = FeatureStandardizer::fit(&f).unwrap();
        assert_eq!(s.std[0], STD_FLOOR);
        for z in &f {
            assert_eq!(s.apply(z)[0], 0.0);
        }
        let zs: Vec<Vec<f64>> = f.iter().map(|z| s.apply(z)).collect();
        let mean: f64 = zs.iter().map(|z| z[1]).sum::<f64>() / 3.0;
        let var: f64 = zs.iter().map(|z| (z[1] - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn limit_stays_in_range(s in 0.0..2.0f64, p in 0.0..2.0f64) {
            let q = reactive_limit(s, p).unwrap();
            prop_assert!(q >= 0.0 && q <= s);
            if p <= s {
                prop_assert!((q * q + p * p - s * s).abs() <= 1e-12);
            }
        }

        #[test]
        fn standardizer_round_trip(
            f in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 3), 2..10),
            z in prop::collection::vec(-5.0..5.0f64, 3),
        ) {
            let s = FeatureStandardizer::fit(&f).unwrap();
            let back = s.invert(&s.apply(&z));
            for (a, b) in back.iter().zip(&z) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
