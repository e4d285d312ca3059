//! Versioned JSON policy files.
//!
//! ```json
//! {
//!   "format": "kvar-policy",
//!   "schema_version": 1,
//!   "lambda": 0.5,
//!   "mu": 0.001,
//!   "selector": {"mode": "hybrid", "lines": [[1, 2], [1, 3], [1, 5]]},
//!   "training_minutes": [660, 661, ...],
//!   "policies": [
//!     {"bus": 1, "kernel": {"kind": "gaussian", "gamma": 3.2},
//!      "standardizer": {"mean": [...], "std": [...]},
//!      "training_inputs": [[...], ...], "a": [...], "b": -0.0012}
//!   ]
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so loading a saved file
//! reproduces every coefficient bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rule::PolicySet;
use crate::error::{Error, Result};
use crate::io_util::write_atomic;

pub const POLICY_FORMAT: &str = "kvar-policy";
pub const POLICY_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    schema_version: u32,
    #[serde(flatten)]
    set: PolicySet,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    schema_version: u32,
}

pub fn policies_to_json(set: &PolicySet) -> Result<String> {
    let env = Envelope {
        format: POLICY_FORMAT.into(),
        schema_version: POLICY_SCHEMA_VERSION,
        set: set.clone(),
    };
    serde_json::to_string_pretty(&env).map_err(|e| Error::PolicyFile(e.to_string()))
}

pub fn policies_from_json(text: &str) -> Result<PolicySet> {
    let header: Header = serde_json::from_str(text).map_err(|e| Error::PolicyFile(e.to_string()))?;
    if header.format != POLICY_FORMAT {
        return Err(Error::PolicyFile(format!("not a policy file (format `{}`)", header.format)));
    }
    if header.schema_version != POLICY_SCHEMA_VERSION {
        return Err(Error::PolicyFile(format!(
            "schema version {} is not supported (expected {POLICY_SCHEMA_VERSION})",
            header.schema_version
        )));
    }
    let env: Envelope = serde_json::from_str(text).map_err(|e| Error::PolicyFile(e.to_string()))?;
    for p in &env.set.policies {
        if p.a.len() != p.training_inputs.len() {
            return Err(Error::PolicyFile(format!(
                "bus {}: {} coefficients for {} training inputs",
                p.bus,
                p.a.len(),
                p.training_inputs.len()
            )));
        }
        if p.a.iter().any(|v| !v.is_finite()) || !p.b.is_finite() {
            return Err(Error::PolicyFile(format!("bus {}: non-finite coefficient", p.bus)));
        }
        p.kernel.validate()?;
    }
    Ok(env.set)
}

pub fn save_policies(set: &PolicySet, path: &Path) -> Result<()> {
    write_atomic(path, policies_to_json(set)?.as_bytes())
}

pub fn load_policies(path: &Path) -> Result<PolicySet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    policies_from_json(&text)
}
