//! JSON model configuration.
//!
//! ```json
//! { "kind": "curie_weiss",
//!   "params": { "beta": 1.5, "field_amplitude": 0.2, "field_frequency": 1.0 },
//!   "epsilon": 0.01, "horizon": 1.0, "phi0": [0.2] }
//! ```
//!
//! Kinds: `symmetric_walk` (`dim`), `curie_weiss` (`beta`, `field_offset`,
//! `field_amplitude`, `field_frequency`), `drift_walk` (`drift`, `correction`).
//! The optional `initial` key selects the law of the first state: `"ball"`
//! (uniform over lattice points within `ε√d` of `phi0`, the default) or
//! `"point"`. Unknown keys anywhere are rejected.

use serde::{Deserialize, Serialize};

use super::{ChainSpec, InitialLaw, CurieWeiss, DriftWalk, ExternalField, SymmetricWalk};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    pub epsilon: Option<f64>,
    pub horizon: Option<f64>,
    pub phi0: Option<Vec<f64>>,
    /// `"ball"` (default) or `"point"`.
    pub initial: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WalkParams {
    #[serde(default = "one")]
    dim: usize,
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CurieWeissParams {
    beta: f64,
    #[serde(default)]
    field_offset: f64,
    #[serde(default)]
    field_amplitude: f64,
    #[serde(default)]
    field_frequency: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DriftParams {
    drift: f64,
    #[serde(default)]
    correction: f64,
}

fn params<T: for<'de> Deserialize<'de>>(kind: &str, map: &serde_json::Map<String, serde_json::Value>) -> Result<T> {
    serde_json::from_value(serde_json::Value::Object(map.clone()))
        .map_err(|e| Error::Config(format!("{kind} params: {e}")))
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn build(&self) -> Result<ChainSpec> {
        let base = match self.kind.as_str() {
            "symmetric_walk" => {
                let p: WalkParams = params(&self.kind, &self.params)?;
                SymmetricWalk::spec(p.dim)?
            }
            "curie_weiss" => {
                let p: CurieWeissParams = params(&self.kind, &self.params)?;
                let field = ExternalField {
                    offset: p.field_offset,
                    amplitude: p.field_amplitude,
                    frequency: p.field_frequency,
                };
                // lattice size is replaced below when epsilon is given
                CurieWeiss::spec(p.beta, field, 100)?
            }
            "drift_walk" => {
                let p: DriftParams = params(&self.kind, &self.params)?;
                DriftWalk::spec(p.drift, p.correction)?
            }
            other => return Err(Error::Config(format!("unknown model kind '{other}'"))),
        };
        let spec = base.reconfigured(self.epsilon, self.horizon, self.phi0.clone())?;
        match self.initial.as_deref() {
            None | Some("ball") => Ok(spec),
            Some("point") => spec.with_initial_law(InitialLaw::Point),
            Some(other) => Err(Error::Config(format!("unknown initial law '{other}'"))),
        }
    }
}
