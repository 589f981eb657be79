//! Model-file language: expressions with `sin`/`cos`, the sectioned system
//! declaration format, and recasting of trigonometric terms into auxiliary
//! polynomial states.

mod ast;
mod lexer;
mod parser;
mod print;
mod recast;
mod system;

use std::collections::HashMap;

use thiserror::Error;

pub use ast::Expr;
pub use recast::{parse_polynomial, recast, DEFAULT_ETA};
pub(crate) use recast::lower;
pub use system::{parse_expr, parse_system};

use crate::poly::PolyError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: undeclared identifier `{name}`")]
    UndeclaredIdentifier { name: String, line: usize, col: usize },
    #[error("{line}:{col}: exponent must be a non-negative integer literal")]
    NonIntegerExponent { line: usize, col: usize },
    #[error("{line}:{col}: nested sin/cos is not supported")]
    NestedTrig { line: usize, col: usize },
    #[error("{line}:{col}: input `{name}` may not appear inside sin/cos")]
    TrigOfInput { name: String, line: usize, col: usize },
    #[error("state `{0}` has no derivative")]
    MissingDerivative(String),
    #[error("state `{0}` has more than one derivative")]
    DuplicateDerivative(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("auxiliary variable `{0}` collides with an existing name")]
    AuxCollision(String),
    #[error("trig argument `{0}` is not a polynomial of the states")]
    NonPolynomialArgument(String),
    #[error("invalid model: {0}")]
    Validation(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// `name in [lo, hi]`; a point value `name = e` is stored with `lo == hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundDecl {
    pub name: String,
    pub lo: Expr,
    pub hi: Expr,
}

/// `sin_name, cos_name = sincos(arg)`: names the auxiliary pair used for
/// one trig argument.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigDecl {
    pub sin: String,
    pub cos: String,
    pub arg: Expr,
}

/// A parsed model file. Parameters, bounds and references stay symbolic so
/// that printing and re-parsing reproduces the same declaration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemDecl {
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub params: Vec<(String, Expr)>,
    pub dynamics: Vec<(String, Expr)>,
    pub admissible: Vec<BoundDecl>,
    pub controls: Vec<BoundDecl>,
    pub unsafe_set: Vec<Expr>,
    pub init: Vec<BoundDecl>,
    pub baseline: Vec<(String, Expr)>,
    pub reference: Vec<(String, Expr)>,
    pub trig: Vec<TrigDecl>,
}

impl SystemDecl {
    /// Numeric parameter values, each evaluated against the ones before it.
    pub fn param_values(&self) -> Result<Vec<(String, f64)>, ExprError> {
        let mut env: HashMap<&str, f64> = HashMap::new();
        let mut out = Vec::with_capacity(self.params.len());
        for (name, e) in &self.params {
            let v = e
                .eval(&env)
                .ok_or_else(|| ExprError::Validation(format!("parameter `{name}` is not constant")))?;
            if !v.is_finite() {
                return Err(ExprError::Validation(format!("parameter `{name}` is not finite")));
            }
            env.insert(name, v);
            out.push((name.clone(), v));
        }
        Ok(out)
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.param_values().ok()?.into_iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    /// Replaces parameter definitions by constants.
    pub fn with_overrides(&self, overrides: &[(String, f64)]) -> Result<SystemDecl, ExprError> {
        let mut out = self.clone();
        for (name, v) in overrides {
            let slot = out
                .params
                .iter_mut()
                .find(|(n, _)| n == name)
                .ok_or_else(|| ExprError::UnknownParameter(name.clone()))?;
            slot.1 = Expr::Const(*v);
        }
        system::validate(&out)?;
        Ok(out)
    }

    /// Evaluates a bound list against the parameters.
    pub fn eval_bounds(&self, bounds: &[BoundDecl]) -> Result<Vec<(String, f64, f64)>, ExprError> {
        let params = self.param_values()?;
        let env: HashMap<&str, f64> = params.iter().map(|(n, v)| (n.as_str(), *v)).collect();
        bounds
            .iter()
            .map(|b| {
                let lo = b.lo.eval(&env);
                let hi = b.hi.eval(&env);
                match (lo, hi) {
                    (Some(lo), Some(hi)) => Ok((b.name.clone(), lo, hi)),
                    _ => Err(ExprError::Validation(format!("bounds of `{}` are not constant", b.name))),
                }
            })
            .collect()
    }

    /// States introduced through the `trig:` section.
    pub fn is_aux(&self, name: &str) -> bool {
        self.trig.iter().any(|t| t.sin == name || t.cos == name)
    }
}
