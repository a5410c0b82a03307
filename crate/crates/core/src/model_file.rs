//! JSON model descriptions.
//!
//! ```json
//! {
//!   "states": ["x", "z"],
//!   "params": ["lambda", {"name": "a_tot", "default": 2.0}],
//!   "rhs": {"x": "-lambda*x + u^2", "z": "-lambda*z + u"},
//!   "output": "x + u*(a_tot - z)",
//!   "x0": [0.0, 0.0]
//! }
//! ```
//!
//! `x0` is optional and defaults to zeros. Expressions use the model
//! expression grammar; `u` is the input and `t` the time.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::systems::{get_registry_model, registry_ids, GeneralSystem, ParamMap, SystemError};

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no right-hand side given for state `{0}`")]
    MissingRhs(String),
    #[error("right-hand side given for undeclared state `{0}`")]
    ExtraRhs(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("`{0}` is neither a registry model ({1}) nor a readable file")]
    NotFound(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamDecl {
    Name(String),
    WithDefault {
        name: String,
        #[serde(default)]
        default: Option<f64>,
    },
}

impl ParamDecl {
    pub fn name(&self) -> &str {
        match self {
            ParamDecl::Name(n) | ParamDecl::WithDefault { name: n, .. } => n,
        }
    }

    pub fn default_value(&self) -> Option<f64> {
        match self {
            ParamDecl::Name(_) => None,
            ParamDecl::WithDefault { default, .. } => *default,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub states: Vec<String>,
    #[serde(default)]
    pub params: Vec<ParamDecl>,
    pub rhs: BTreeMap<String, String>,
    pub output: String,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

/// A system together with the parameter defaults that came with it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub name: String,
    pub system: GeneralSystem,
    pub defaults: ParamMap,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self, ModelFileError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model files always serialize")
    }

    pub fn build(&self) -> Result<(GeneralSystem, ParamMap), ModelFileError> {
        if let Some(extra) = self.rhs.keys().find(|k| !self.states.contains(k)) {
            return Err(ModelFileError::ExtraRhs(extra.clone()));
        }
        let rhs = self
            .states
            .iter()
            .map(|s| self.rhs.get(s).cloned().ok_or_else(|| ModelFileError::MissingRhs(s.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let names: Vec<String> = self.params.iter().map(|p| p.name().to_string()).collect();
        let system = GeneralSystem::parse(&self.states, &names, &rhs, &self.output, self.x0.clone())?;
        let defaults =
            self.params.iter().filter_map(|p| p.default_value().map(|v| (p.name().to_string(), v))).collect();
        Ok((system, defaults))
    }
}

/// Resolves `spec` as a registry id first, then as a path to a JSON model file.
pub fn load_model(spec: &str) -> Result<LoadedModel, ModelFileError> {
    if let Ok(entry) = get_registry_model(spec) {
        return Ok(LoadedModel { name: entry.id, system: entry.system, defaults: entry.default_params });
    }
    let path = Path::new(spec);
    if !path.is_file() {
        return Err(ModelFileError::NotFound(spec.to_string(), registry_ids().join(", ")));
    }
    let (system, defaults) = ModelFile::from_json(&std::fs::read_to_string(path)?)?.build()?;
    Ok(LoadedModel { name: spec.to_string(), system, defaults })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAMBDA: &str = r#"{
        "states": ["x", "z"],
        "params": ["lambda", {"name": "a_tot", "default": 2.0}],
        "rhs": {"z": "-lambda*z + u", "x": "-lambda*x + u^2"},
        "output": "x + u*(a_tot - z)"
    }"#;

    #[test]
    fn builds_registry_equivalent() {
        let (sys, defaults) = ModelFile::from_json(LAMBDA).unwrap().build().unwrap();
        let reg = get_registry_model("lambda-system").unwrap().system;
        assert_eq!(sys, reg);
        assert_eq!(defaults.get("a_tot"), Some(&2.0));
        assert!(!defaults.contains_key("lambda"));
    }

    #[test]
    fn json_round_trip() {
        let m = ModelFile::from_json(LAMBDA).unwrap();
        assert_eq!(ModelFile::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn rejects_mismatched_rhs() {
        let missing = r#"{"states": ["x", "y"], "rhs": {"x": "-x"}, "output": "x"}"#;
        assert!(matches!(ModelFile::from_json(missing).unwrap().build(), Err(ModelFileError::MissingRhs(s)) if s == "y"));
        let extra = r#"{"states": ["x"], "rhs": {"x": "-x", "w": "1"}, "output": "x"}"#;
        assert!(matches!(ModelFile::from_json(extra).unwrap().build(), Err(ModelFileError::ExtraRhs(_))));
        let bad = r#"{"states": ["x"], "rhs": {"x": "-x +"}, "output": "x"}"#;
        assert!(matches!(ModelFile::from_json(bad).unwrap().build(), Err(ModelFileError::System(_))));
        assert!(ModelFile::from_json(r#"{"states": ["x"]}"#).is_err());
    }

    #[test]
    fn load_by_id_or_path() {
        assert_eq!(load_model("scalar-lti").unwrap().name, "scalar-lti");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, LAMBDA).unwrap();
        let m = load_model(path.to_str().unwrap()).unwrap();
        assert_eq!(m.system.n_states(), 2);
        assert!(matches!(load_model("no-such-model"), Err(ModelFileError::NotFound(..))));
    }
}
