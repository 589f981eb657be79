//! Polynomial dynamical systems `dx/dt = f(x, u)` with their operating
//! boxes, unsafe sets and control period, plus the builtin models.

mod builtin;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use builtin::{builtin, builtin_certificate, builtin_names, load, load_str, M1_UNSAFE_ACTION};

use crate::expr::{self, ExprError};
use crate::poly::{vars, IntervalBox, PolyError, Polynomial, Vars, VectorField};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model `{0}` (builtin models: {1})")]
    UnknownModel(String, String),
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("invalid system: {0}")]
    Invalid(String),
}

/// Auxiliary states standing for `sin(arg)` and `cos(arg)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxPair {
    pub sin: String,
    pub cos: String,
    /// Polynomial over the non-auxiliary states.
    pub arg: Polynomial,
}

/// Everything needed to build a [`DynSystem`]. Polynomials may live in any
/// space that contains the variables they use.
#[derive(Debug, Clone)]
pub struct SystemParts {
    pub name: String,
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub dynamics: Vec<Polynomial>,
    pub admissible: IntervalBox,
    pub controls: IntervalBox,
    pub unsafe_set: Vec<Polynomial>,
    /// Initial box over the non-auxiliary states.
    pub init: IntervalBox,
    pub baseline: Option<Vec<Polynomial>>,
    pub reference: Vec<(String, f64)>,
    pub eta: f64,
    pub aux: Vec<AuxPair>,
    pub params: Vec<(String, f64)>,
}

/// A polynomial ODE system. Dynamics live in the space `states ++ inputs`;
/// unsafe-set polynomials and the baseline law live in the state space.
/// A state is unsafe iff some `g_k(x) < 0`.
#[derive(Debug, Clone)]
pub struct DynSystem {
    name: String,
    states: Vec<String>,
    inputs: Vec<String>,
    space: Vars,
    state_space: Vars,
    dynamics: Vec<Polynomial>,
    admissible: IntervalBox,
    controls: IntervalBox,
    unsafe_set: Vec<Polynomial>,
    init: IntervalBox,
    baseline: Option<Vec<Polynomial>>,
    reference: Vec<(String, f64)>,
    eta: f64,
    aux: Vec<AuxPair>,
    params: Vec<(String, f64)>,
    /// positions of the non-auxiliary states within `states`
    base_index: Vec<usize>,
}

impl DynSystem {
    pub fn new(p: SystemParts) -> Result<Self, ModelError> {
        let invalid = |m: String| Err(ModelError::Invalid(m));
        if p.states.is_empty() {
            return invalid("no states".into());
        }
        let mut all: Vec<String> = p.states.clone();
        all.extend(p.inputs.iter().cloned());
        for (i, n) in all.iter().enumerate() {
            if all[..i].contains(n) {
                return invalid(format!("duplicate variable `{n}`"));
            }
        }
        if !(p.eta > 0.0 && p.eta.is_finite()) {
            return invalid(format!("control period must be positive, got {}", p.eta));
        }
        if p.dynamics.len() != p.states.len() {
            return invalid(format!("{} states but {} derivatives", p.states.len(), p.dynamics.len()));
        }
        let space = vars(&all);
        let state_space = vars(&p.states);
        let dynamics = p
            .dynamics
            .iter()
            .map(|f| f.with_vars(&space))
            .collect::<Result<Vec<_>, _>>()?;
        let unsafe_set = p
            .unsafe_set
            .iter()
            .map(|g| g.with_vars(&state_space))
            .collect::<Result<Vec<_>, _>>()?;
        let baseline = match &p.baseline {
            None => None,
            Some(b) if b.len() != p.inputs.len() => {
                return invalid(format!("baseline has {} laws for {} inputs", b.len(), p.inputs.len()))
            }
            Some(b) => Some(b.iter().map(|f| f.with_vars(&state_space)).collect::<Result<Vec<_>, _>>()?),
        };
        let admissible = align(&p.admissible, &state_space)?;
        for b in admissible.bounds() {
            if !(b.lo < b.hi) {
                return invalid(format!("admissible box must have lo < hi, got {b}"));
            }
        }
        let controls = align(&p.controls, &vars(&p.inputs))?;
        let is_aux = |n: &str| p.aux.iter().any(|a| a.sin == n || a.cos == n);
        let base_index: Vec<usize> = (0..p.states.len()).filter(|&i| !is_aux(&p.states[i])).collect();
        let base_space = vars(&base_index.iter().map(|&i| p.states[i].clone()).collect::<Vec<_>>());
        let init = align(&p.init, &base_space)?;
        let mut aux = Vec::with_capacity(p.aux.len());
        for a in &p.aux {
            if !p.states.contains(&a.sin) || !p.states.contains(&a.cos) {
                return invalid(format!("auxiliary pair `{}`/`{}` is not among the states", a.sin, a.cos));
            }
            aux.push(AuxPair { sin: a.sin.clone(), cos: a.cos.clone(), arg: a.arg.with_vars(&base_space)? });
        }
        for (n, _) in &p.reference {
            if !p.states.contains(n) {
                return invalid(format!("reference for unknown state `{n}`"));
            }
        }
        Ok(Self {
            name: p.name,
            states: p.states,
            inputs: p.inputs,
            space,
            state_space,
            dynamics,
            admissible,
            controls,
            unsafe_set,
            init,
            baseline,
            reference: p.reference,
            eta: p.eta,
            aux,
            params: p.params,
            base_index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self, ModelError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(ModelError::Invalid(format!("control period must be positive, got {eta}")));
        }
        self.eta = eta;
        Ok(self)
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    /// `states ++ inputs`, the space of the dynamics.
    pub fn space(&self) -> &Vars {
        &self.space
    }

    pub fn state_space(&self) -> &Vars {
        &self.state_space
    }

    pub fn dynamics(&self) -> &[Polynomial] {
        &self.dynamics
    }

    pub fn admissible(&self) -> &IntervalBox {
        &self.admissible
    }

    pub fn controls(&self) -> &IntervalBox {
        &self.controls
    }

    pub fn unsafe_set(&self) -> &[Polynomial] {
        &self.unsafe_set
    }

    pub fn init(&self) -> &IntervalBox {
        &self.init
    }

    pub fn baseline(&self) -> Option<&[Polynomial]> {
        self.baseline.as_deref()
    }

    pub fn reference(&self) -> &[(String, f64)] {
        &self.reference
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn aux(&self) -> &[AuxPair] {
        &self.aux
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// Names of the states that are not trig auxiliaries.
    pub fn base_states(&self) -> Vec<&str> {
        self.base_index.iter().map(|&i| self.states[i].as_str()).collect()
    }

    pub fn vector_field(&self) -> VectorField {
        VectorField::new(self.states.iter().cloned().zip(self.dynamics.iter().cloned()).collect())
    }

    /// `f(x, u)` at `point = x ++ u`.
    pub fn eval_field(&self, point: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.dynamics) {
            *o = f.eval_unchecked(point);
        }
    }

    /// Full state from values of the non-auxiliary states; auxiliary states
    /// are set to `sin`/`cos` of their arguments.
    pub fn complete_state(&self, base: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.states.len()];
        for (&i, v) in self.base_index.iter().zip(base) {
            x[i] = *v;
        }
        for a in &self.aux {
            let t = a.arg.eval_unchecked(base);
            x[self.state_index(&a.sin).unwrap()] = t.sin();
            x[self.state_index(&a.cos).unwrap()] = t.cos();
        }
        x
    }

    /// Values of the non-auxiliary states.
    pub fn base_part(&self, x: &[f64]) -> Vec<f64> {
        self.base_index.iter().map(|&i| x[i]).collect()
    }

    /// `min_k g_k(x)`, or `+inf` without an unsafe set.
    pub fn safety_margin(&self, x: &[f64]) -> f64 {
        self.unsafe_set.iter().map(|g| g.eval_unchecked(x)).fold(f64::INFINITY, f64::min)
    }

    /// Boundary states (`g_k = 0`) are safe.
    pub fn is_unsafe(&self, x: &[f64]) -> bool {
        self.safety_margin(x) < 0.0
    }

    pub fn baseline_action(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.baseline.as_ref().map(|b| b.iter().map(|p| p.eval_unchecked(x)).collect())
    }

    /// Lowers an expression over the states and parameters, e.g. a candidate
    /// certificate. `sin`/`cos` are accepted when their argument matches an
    /// auxiliary pair.
    pub fn state_poly(&self, text: &str) -> Result<Polynomial, ModelError> {
        let e = expr::parse_expr(text)?;
        let env: HashMap<&str, f64> = self.params.iter().map(|(n, v)| (n.as_str(), *v)).collect();
        let base_space = self.init.vars().clone();
        let target = self.state_space.clone();
        let trig = |is_sin: bool, a: &expr::Expr| -> Result<Polynomial, ExprError> {
            let unresolved = || ExprError::NonPolynomialArgument(a.to_string());
            let p = expr::lower(a, &base_space, &env, &|_, _| Err(unresolved()))?;
            let neg = -p.clone();
            for pair in &self.aux {
                let sign = if pair.arg == p {
                    1.0
                } else if pair.arg == neg {
                    -1.0
                } else {
                    continue;
                };
                return Ok(if is_sin {
                    Polynomial::var(target.clone(), &pair.sin)?.scale(sign)
                } else {
                    Polynomial::var(target.clone(), &pair.cos)?
                });
            }
            Err(unresolved())
        };
        Ok(expr::lower(&e, &self.state_space, &env, &trig)?)
    }

    /// Model-file text describing this polynomial system. Loading it yields
    /// an equal system.
    pub fn to_model_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "states: {}", self.states.join(", "));
        if !self.inputs.is_empty() {
            let _ = writeln!(s, "inputs: {}", self.inputs.join(", "));
        }
        let _ = writeln!(s, "params:");
        for (n, v) in &self.params {
            if n != "eta" {
                let _ = writeln!(s, "  {n} = {}", expr::Expr::Const(*v));
            }
        }
        let _ = writeln!(s, "  eta = {}", self.eta);
        if !self.aux.is_empty() {
            let _ = writeln!(s, "trig:");
            for a in &self.aux {
                let _ = writeln!(s, "  {}, {} = sincos({})", a.sin, a.cos, poly_expr(&a.arg));
            }
        }
        let _ = writeln!(s, "dynamics:");
        for (n, f) in self.states.iter().zip(&self.dynamics) {
            let _ = writeln!(s, "  d{n}/dt = {}", poly_expr(f));
        }
        let bounds = |s: &mut String, header: &str, b: &IntervalBox| {
            let _ = writeln!(s, "{header}:");
            for (n, iv) in b.vars().iter().zip(b.bounds()) {
                let _ = writeln!(s, "  {n} in [{}, {}]", expr::Expr::Const(iv.lo), expr::Expr::Const(iv.hi));
            }
        };
        bounds(&mut s, "admissible", &self.admissible);
        if !self.inputs.is_empty() {
            bounds(&mut s, "controls", &self.controls);
        }
        if !self.unsafe_set.is_empty() {
            let _ = writeln!(s, "unsafe:");
            for g in &self.unsafe_set {
                let _ = writeln!(s, "  unsafe when {} < 0", poly_expr(g));
            }
        }
        bounds(&mut s, "init", &self.init);
        if let Some(b) = &self.baseline {
            let _ = writeln!(s, "baseline:");
            for (n, f) in self.inputs.iter().zip(b) {
                let _ = writeln!(s, "  {n} = {}", poly_expr(f));
            }
        }
        if !self.reference.is_empty() {
            let _ = writeln!(s, "reference:");
            for (n, v) in &self.reference {
                let _ = writeln!(s, "  {n} = {}", expr::Expr::Const(*v));
            }
        }
        s
    }

    /// SHA-256 of the model text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_model_text().as_bytes()))
    }
}

/// Structural equality; the display name and parameter list are ignored.
impl PartialEq for DynSystem {
    fn eq(&self, o: &Self) -> bool {
        self.states == o.states
            && self.inputs == o.inputs
            && self.dynamics == o.dynamics
            && self.admissible == o.admissible
            && self.controls == o.controls
            && self.unsafe_set == o.unsafe_set
            && self.init == o.init
            && self.baseline == o.baseline
            && self.reference == o.reference
            && self.eta == o.eta
            && self.aux == o.aux
    }
}

fn align(b: &IntervalBox, target: &Vars) -> Result<IntervalBox, ModelError> {
    let bounds = target
        .iter()
        .map(|n| b.get(n).ok_or_else(|| ModelError::Invalid(format!("no bounds for `{n}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IntervalBox::new(target.clone(), bounds)?)
}

/// Sum of `c*x^e*...` terms, which lowers back to the same polynomial.
fn poly_expr(p: &Polynomial) -> expr::Expr {
    use expr::Expr;
    let mut acc: Option<Expr> = None;
    for (exps, c) in p.terms().rev() {
        let mut t = Expr::Const(c);
        for (name, &e) in p.vars().iter().zip(exps) {
            let v = Expr::Var(name.clone());
            t = match e {
                0 => continue,
                1 => Expr::mul(t, v),
                _ => Expr::mul(t, Expr::pow(v, e)),
            };
        }
        acc = Some(match acc {
            None => t,
            Some(a) => Expr::add(a, t),
        });
    }
    acc.unwrap_or(Expr::Const(0.0))
}

pub(crate) fn read(path: &Path) -> Result<String, ModelError> {
    std::fs::read_to_string(path).map_err(|e| ModelError::Io { path: path.display().to_string(), msg: e.to_string() })
}
