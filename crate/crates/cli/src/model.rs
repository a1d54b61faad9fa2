//! JSON model document.
//!
//! ```json
//! {
//!   "beta": 1.5,
//!   "Q": [[-0.5, 0.5], [0.3, -0.3]],
//!   "states": [
//!     {"name": "calm", "family": "brownian", "gamma": 1.0, "sigma": 1.2, "delta": 0.5, "r": 0.1},
//!     {"name": "stress", "family": "cramer_lundberg", "c": 2.0, "lambda": 1.0, "mu": 1.0,
//!      "delta": 0.4, "r": 0.15}
//!   ],
//!   "jumps": [[null, {"kind": "point_mass", "size": 0.3}],
//!             [{"kind": "exponential", "rate": 4.0}, null]],
//!   "single": {"state": 0, "kill_rate": 0.5,
//!              "payoff": {"knots": [0, 1], "values": [0.2, 0.9], "tail_slope": 0.1}},
//!   "run": {"tol": 1e-6, "grid_points": 801, "seed": 7}
//! }
//! ```
//!
//! `r` is the per-state discount rate. The single-regime problem of state `i`
//! discounts at `q = r(i)` and is killed at rate `kill_rate`, so its scale
//! functions are indexed by `α = q + kill_rate`. `jumps` and `single` are
//! optional; diagonal jump entries must be `null`.

use bailout_core::levy_model::{AuxiliaryProblem, JumpLaw, LevyModel, RegimeModel};
use bailout_core::payoff::PayoffFunction;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub beta: f64,
    #[serde(rename = "Q")]
    pub generator: Vec<Vec<f64>>,
    pub states: Vec<StateDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<Vec<Vec<Option<JumpDoc>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single: Option<SingleDoc>,
    #[serde(default)]
    pub run: RunDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub delta: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Fields `gamma`, `sigma`.
    Brownian,
    /// Fields `c`, `lambda`, `mu` (premium rate, claim rate, claim-size rate).
    CramerLundberg,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpDoc {
    PointMass { size: f64 },
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleDoc {
    #[serde(default)]
    pub state: usize,
    #[serde(default)]
    pub kill_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<PayoffDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffDoc {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub tail_slope: f64,
}

/// Numerical settings. Command-line flags take precedence and are written back
/// here in the resolved-config echo.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

/// Reads a document, applies `key=value` overrides and checks the schema.
pub fn load(text: &str, overrides: &[String]) -> Result<ModelDoc, CliError> {
    let mut doc: Value =
        serde_json::from_str(text).map_err(|e| CliError::Schema(format!("<document>: {e}")))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let parsed: ModelDoc = serde_path_to_error::deserialize(doc)
        .map_err(|e| CliError::Schema(format!("{}: {}", e.path(), e.inner())))?;
    parsed.check_shape()?;
    Ok(parsed)
}

/// `states.1.sigma=0.8`, `Q.0.1=0.4`, `run.seed=3`. The value is read as JSON
/// when it parses, otherwise as a string.
fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Schema(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let path = parts[..=depth].join(".");
        slot = match slot {
            Value::Array(items) => {
                let k: usize = part
                    .parse()
                    .map_err(|_| CliError::Schema(format!("{path}: expected an index")))?;
                items
                    .get_mut(k)
                    .ok_or_else(|| CliError::Schema(format!("{path}: index out of range")))?
            }
            Value::Object(map) => map.entry(part.to_string()).or_insert(Value::Null),
            Value::Null => {
                *slot = Value::Object(Default::default());
                slot.as_object_mut()
                    .unwrap()
                    .entry(part.to_string())
                    .or_insert(Value::Null)
            }
            _ => {
                return Err(CliError::Schema(format!(
                    "{path}: parent is not a container"
                )))
            }
        };
    }
    *slot = value;
    Ok(())
}

impl StateDoc {
    /// The family's parameters, in constructor order.
    fn fields(&self, i: usize) -> Result<Vec<f64>, CliError> {
        let (wanted, unwanted): (&[(&str, Option<f64>)], &[(&str, Option<f64>)]) = match self.family
        {
            Family::Brownian => (
                &[("gamma", self.gamma), ("sigma", self.sigma)],
                &[("c", self.c), ("lambda", self.lambda), ("mu", self.mu)],
            ),
            Family::CramerLundberg => (
                &[("c", self.c), ("lambda", self.lambda), ("mu", self.mu)],
                &[("gamma", self.gamma), ("sigma", self.sigma)],
            ),
        };
        if let Some((k, _)) = unwanted.iter().find(|(_, v)| v.is_some()) {
            return Err(CliError::Schema(format!(
                "states[{i}].{k}: not a parameter of family {:?}",
                self.family
            )));
        }
        wanted
            .iter()
            .map(|(k, v)| {
                v.ok_or_else(|| CliError::Schema(format!("states[{i}].{k}: missing field")))
            })
            .collect()
    }

    fn levy(&self, i: usize) -> Result<LevyModel, CliError> {
        let p = self.fields(i)?;
        Ok(match self.family {
            Family::Brownian => LevyModel::brownian_drift(p[0], p[1])?,
            Family::CramerLundberg => LevyModel::cramer_lundberg(p[0], p[1], p[2])?,
        })
    }
}

impl ModelDoc {
    fn check_shape(&self) -> Result<(), CliError> {
        let n = self.states.len();
        if n == 0 {
            return Err(CliError::Schema(
                "states: at least one state required".into(),
            ));
        }
        if self.generator.len() != n {
            return Err(CliError::Schema(format!("Q: expected {n} rows")));
        }
        for (i, row) in self.generator.iter().enumerate() {
            if row.len() != n {
                return Err(CliError::Schema(format!("Q.{i}: expected {n} entries")));
            }
        }
        if let Some(jumps) = &self.jumps {
            if jumps.len() != n {
                return Err(CliError::Schema(format!("jumps: expected {n} rows")));
            }
            for (i, row) in jumps.iter().enumerate() {
                if row.len() != n {
                    return Err(CliError::Schema(format!("jumps.{i}: expected {n} entries")));
                }
                if row[i].is_some() {
                    return Err(CliError::Schema(format!(
                        "jumps.{i}.{i}: diagonal must be null"
                    )));
                }
            }
        }
        for (i, s) in self.states.iter().enumerate() {
            s.fields(i)?;
        }
        if let Some(s) = &self.single {
            if s.state >= n {
                return Err(CliError::Schema(format!(
                    "single.state: no state {}",
                    s.state
                )));
            }
        }
        Ok(())
    }

    pub fn regime(&self) -> Result<RegimeModel, CliError> {
        let n = self.states.len();
        let levy = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| s.levy(i))
            .collect::<Result<Vec<_>, _>>()?;
        let switch_jumps = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match self.jumps.as_ref().and_then(|t| t[i][j]) {
                        None => JumpLaw::Zero,
                        Some(JumpDoc::PointMass { size }) => JumpLaw::PointMass { size },
                        Some(JumpDoc::Exponential { rate }) => JumpLaw::Exponential { rate },
                    })
                    .collect()
            })
            .collect();
        Ok(RegimeModel {
            names: self
                .states
                .iter()
                .enumerate()
                .map(|(i, s)| s.name.clone().unwrap_or_else(|| format!("state{i}")))
                .collect(),
            generator: self.generator.clone(),
            levy,
            delta: self.states.iter().map(|s| s.delta).collect(),
            discount: self.states.iter().map(|s| s.r).collect(),
            switch_jumps,
            beta: self.beta,
        })
    }

    /// The single-regime problem described by `single`, defaulting to state 0
    /// with no killing and no payoff.
    pub fn single_problem(&self) -> Result<(AuxiliaryProblem, usize), CliError> {
        let regime = self.regime()?;
        let s = self.single.clone().unwrap_or(SingleDoc {
            state: 0,
            kill_rate: 0.0,
            payoff: None,
        });
        let payoff = match s.payoff {
            Some(p) => PayoffFunction::new(p.knots, p.values, p.tail_slope)?,
            None => PayoffFunction::zero(),
        };
        let i = s.state;
        let prob = AuxiliaryProblem::new(
            regime.levy[i].clone(),
            regime.delta[i],
            regime.beta,
            regime.discount[i],
            s.kill_rate,
            payoff,
        )?;
        Ok((prob, i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{"beta": 1.5, "Q": [[0]],
        "states": [{"family": "brownian", "gamma": 1, "sigma": 1, "delta": 0.5, "r": 0.1}]}"#;

    #[test]
    fn overrides_reach_nested_fields() {
        let doc = load(DOC, &["states.0.sigma=0.7".into(), "run.seed=9".into()]).unwrap();
        assert_eq!(doc.states[0].sigma, Some(0.7));
        assert_eq!(doc.run.seed, Some(9));
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = load(DOC, &["states.0.sigma=\"wide\"".into()]).unwrap_err();
        assert!(err.to_string().contains("states[0].sigma"), "{err}");
        let err = load(DOC, &["Q.3=1".into()]).unwrap_err();
        assert!(err.to_string().contains("Q.3"), "{err}");
    }
}
