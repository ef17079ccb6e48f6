use std::path::{Path, PathBuf};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::baselines::BaselineKind;
use crate::dynamics::{Cb2oParams, TraceLevel};
use crate::ensemble::InitSpec;
use crate::error::{Error, Result};

/// Which solver a configuration runs. Serialised as `{"kind": "cb2o"}` or as
/// the tagged [`BaselineKind`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Solver {
    #[default]
    Cb2o,
    Baseline(BaselineKind),
}

impl Solver {
    pub fn label(&self) -> &'static str {
        match self {
            Solver::Cb2o => "CB2O",
            Solver::Baseline(b) => b.label(),
        }
    }
}

impl Serialize for Solver {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Solver::Cb2o => serde_json::json!({ "kind": "cb2o" }).serialize(s),
            Solver::Baseline(b) => b.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Solver {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        if v.get("kind").and_then(Value::as_str) == Some("cb2o") {
            match v.as_object() {
                Some(o) if o.len() == 1 => Ok(Solver::Cb2o),
                _ => Err(D::Error::custom(
                    "method of kind `cb2o` takes no other fields",
                )),
            }
        } else {
            BaselineKind::deserialize(v)
                .map(Solver::Baseline)
                .map_err(D::Error::custom)
        }
    }
}

fn default_seeds() -> usize {
    100
}

/// One multi-seed experiment: a benchmark, a solver and its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: String,
    #[serde(default)]
    pub method: Solver,
    #[serde(default)]
    pub solver: Cb2oParams,
    /// Initial law; the benchmark default when absent.
    #[serde(default)]
    pub init: Option<InitSpec>,
    #[serde(default = "default_seeds")]
    pub n_seeds: usize,
    /// Replicate `r` runs with seed `base_seed + r`.
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub trace: TraceLevel,
    /// Worker threads; all available cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(benchmark: &str, method: Solver, solver: Cb2oParams) -> Self {
        Self {
            benchmark: benchmark.to_string(),
            method,
            solver,
            init: None,
            n_seeds: default_seeds(),
            base_seed: 0,
            out: None,
            trace: TraceLevel::Summary,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::Config("n_seeds must be >= 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        self.solver.validate()
    }
}

/// Parses JSON text into `T`, reporting the offending key on schema errors.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(schema_error)
}

/// Typed parse of an already loaded value; errors carry the dotted key path.
pub fn from_value<T: for<'de> Deserialize<'de>>(v: Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(schema_error)
}

fn schema_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> Error {
    let path = e.path().to_string();
    if path == "." {
        Error::Config(format!("invalid config: {}", e.inner()))
    } else {
        Error::Config(format!("invalid config at `{path}`: {}", e.inner()))
    }
}

/// Loads a JSON file into a generic value so that overrides can be applied
/// before the typed parse.
pub fn load_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{} is not valid JSON: {e}", path.display())))
}

/// Applies `key.path=value`. The value is parsed as JSON when possible and
/// kept as a string otherwise; intermediate objects are created as needed.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not KEY=VALUE")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            return Err(Error::Config(format!(
                "override `{key}`: `{}` is not an object",
                parts[..i].join(".")
            )));
        }
        let obj = cur.as_object_mut().expect("checked above");
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("key has at least one part")
}

/// Reads a config file, applies the overrides in order and parses the result.
pub fn load_config<T: for<'de> Deserialize<'de>>(
    path: Option<&Path>,
    overrides: &[String],
) -> Result<T> {
    let mut v = match path {
        Some(p) => load_value(p)?,
        None => Value::Object(Default::default()),
    };
    for o in overrides {
        apply_override(&mut v, o)?;
    }
    from_value(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_round_trip() {
        for s in [
            Solver::Cb2o,
            Solver::Baseline(BaselineKind::PenalizedCbo { chi: 100.0 }),
            Solver::Baseline(BaselineKind::ProjectedCbo),
        ] {
            let j = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<Solver>(&j).unwrap(), s);
        }
        assert!(serde_json::from_str::<Solver>(r#"{"kind":"cb2o","chi":1}"#).is_err());
        assert!(serde_json::from_str::<Solver>(r#"{"kind":"nope"}"#).is_err());
    }

    #[test]
    fn overrides() {
        let mut v = serde_json::json!({"benchmark": "ackley-circle", "solver": {"beta": 0.05}});
        apply_override(&mut v, "solver.beta=0.009").unwrap();
        apply_override(&mut v, "solver.diffusion=anisotropic").unwrap();
        apply_override(&mut v, "init.kind=uniform").unwrap();
        assert_eq!(v["solver"]["beta"], 0.009);
        assert_eq!(v["solver"]["diffusion"], "anisotropic");
        assert_eq!(v["init"]["kind"], "uniform");
        assert!(apply_override(&mut v, "benchmark.x=1").is_err());
        assert!(apply_override(&mut v, "noequals").is_err());
        assert!(apply_override(&mut v, "a..b=1").is_err());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_json::<ExperimentConfig>(r#"{"benchmark":"x","solver":{"lamda":1}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
    }

    #[test]
    fn defaults() {
        let c: ExperimentConfig = parse_json(r#"{"benchmark":"ackley-circle"}"#).unwrap();
        assert_eq!(c.n_seeds, 100);
        assert_eq!(c.method, Solver::Cb2o);
        assert_eq!(c.solver, Cb2oParams::default());
    }
}
