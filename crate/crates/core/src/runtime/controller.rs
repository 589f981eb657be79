use std::fmt;
use std::str::FromStr;

use super::RuntimeError;
use crate::model::DynSystem;
use crate::poly::{IntervalBox, Polynomial};

/// What a controller returned for one period.
#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Action { u: Vec<f64>, clamped: bool },
    Timeout,
}

pub trait Controller: Send {
    fn act(&mut self, t: f64, x: &[f64]) -> Result<Response, RuntimeError>;
}

/// Projects `u` onto the control box; the flag reports whether it moved.
pub fn clamp_action(controls: &IntervalBox, u: &[f64]) -> Result<(Vec<f64>, bool), RuntimeError> {
    if u.len() != controls.len() {
        return Err(RuntimeError::ActionArity { expected: controls.len(), got: u.len() });
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(RuntimeError::NonFiniteAction(u.to_vec()));
    }
    let mut clamped = false;
    let out = u
        .iter()
        .zip(controls.bounds())
        .map(|(&v, b)| {
            let c = v.clamp(b.lo, b.hi);
            clamped |= c != v;
            c
        })
        .collect();
    Ok((out, clamped))
}

/// A controller that can be described on the command line:
/// `baseline`, `constant:0.5` or `constant:0.1,0.2`, and
/// `affine:K|b` with rows of `K` separated by `;` (`affine:-1,0|0.1`).
/// Affine gains act on the full state vector.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec {
    Baseline,
    Constant(Vec<f64>),
    Affine { gain: Vec<Vec<f64>>, offset: Vec<f64> },
}

fn numbers(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"))).collect()
}

impl FromStr for ControllerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind.trim() {
            "baseline" | "bc" if rest.is_empty() => Ok(ControllerSpec::Baseline),
            "constant" => Ok(ControllerSpec::Constant(numbers(rest)?)),
            "affine" => {
                let (k, b) = rest.split_once('|').ok_or("affine controller needs `K|b`")?;
                let gain = k.split(';').map(numbers).collect::<Result<Vec<_>, _>>()?;
                Ok(ControllerSpec::Affine { gain, offset: numbers(b)? })
            }
            _ => Err(format!("unknown controller `{s}` (expected baseline, constant:..., affine:K|b)")),
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for ControllerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControllerSpec::Baseline => f.write_str("baseline"),
            ControllerSpec::Constant(u) => write!(f, "constant:{}", join(u)),
            ControllerSpec::Affine { gain, offset } => {
                let k: Vec<String> = gain.iter().map(|r| join(r)).collect();
                write!(f, "affine:{}|{}", k.join(";"), join(offset))
            }
        }
    }
}

enum Law {
    Polys(Vec<Polynomial>),
    Constant(Vec<f64>),
    Affine(Vec<Vec<f64>>, Vec<f64>),
}

/// In-process controller built from a [`ControllerSpec`].
pub struct LocalController {
    law: Law,
    controls: IntervalBox,
}

impl LocalController {
    pub fn raw_action(&self, x: &[f64]) -> Vec<f64> {
        match &self.law {
            Law::Polys(ps) => ps.iter().map(|p| p.eval_unchecked(x)).collect(),
            Law::Constant(u) => u.clone(),
            Law::Affine(k, b) => k.iter().zip(b).map(|(row, b)| b + row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>()).collect(),
        }
    }
}

impl Controller for LocalController {
    fn act(&mut self, _t: f64, x: &[f64]) -> Result<Response, RuntimeError> {
        let (u, clamped) = clamp_action(&self.controls, &self.raw_action(x))?;
        Ok(Response::Action { u, clamped })
    }
}

impl ControllerSpec {
    pub fn build(&self, sys: &DynSystem) -> Result<LocalController, RuntimeError> {
        let j = sys.inputs().len();
        let law = match self {
            ControllerSpec::Baseline => Law::Polys(sys.baseline().ok_or(RuntimeError::NoBaseline)?.to_vec()),
            ControllerSpec::Constant(u) => {
                if u.len() != j {
                    return Err(RuntimeError::ActionArity { expected: j, got: u.len() });
                }
                Law::Constant(u.clone())
            }
            ControllerSpec::Affine { gain, offset } => {
                let k = sys.states().len();
                if offset.len() != j || gain.len() != j || gain.iter().any(|r| r.len() != k) {
                    return Err(RuntimeError::BadController(format!("affine law needs a {j}x{k} gain and {j} offsets")));
                }
                Law::Affine(gain.clone(), offset.clone())
            }
        };
        Ok(LocalController { law, controls: sys.controls().clone() })
    }
}
