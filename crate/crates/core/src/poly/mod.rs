//! Sparse multivariate polynomials over named variables.
//!
//! A [`Polynomial`] lives in a variable space (an ordered list of names shared
//! through an `Arc`). Terms are kept in graded-lexicographic order with no
//! zero coefficients, so two polynomials in the same space are equal exactly
//! when their term maps are equal.

mod bound;
mod interval;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use thiserror::Error;

pub use interval::{Interval, IntervalBox};

/// Ordered variable names shared between polynomials of one system.
pub type Vars = Arc<[String]>;

/// Build a variable space from string slices.
pub fn vars<S: AsRef<str>>(names: &[S]) -> Vars {
    names.iter().map(|s| s.as_ref().to_string()).collect()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("point has {got} coordinates, polynomial space has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{0}` is used by the polynomial but missing from the target space")]
    MissingVariable(String),
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
}

/// Exponent vector, ordered graded-lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exps: Vec<u32>) -> Self {
        Monomial(exps)
    }

    pub fn one(n: usize) -> Self {
        Monomial(vec![0; n])
    }

    pub fn exps(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
pub struct Polynomial {
    vars: Vars,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(vars: Vars) -> Self {
        Self { vars, terms: BTreeMap::new() }
    }

    pub fn constant(vars: Vars, c: f64) -> Self {
        let n = vars.len();
        Self::from_terms(vars, [(vec![0; n], c)])
    }

    pub fn var(vars: Vars, name: &str) -> Result<Self, PolyError> {
        let idx = vars
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| PolyError::UnknownVariable(name.to_string()))?;
        let mut e = vec![0; vars.len()];
        e[idx] = 1;
        Ok(Self::from_terms(vars, [(e, 1.0)]))
    }

    /// Collects terms, summing duplicates and dropping zeros.
    pub fn from_terms<I>(vars: Vars, terms: I) -> Self
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut map: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (e, c) in terms {
            assert_eq!(e.len(), vars.len(), "exponent vector length must match the space");
            *map.entry(Monomial(e)).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        Self { vars, terms: map }
    }

    pub fn vars(&self) -> &Vars {
        &self.vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&[u32], f64)> + '_ {
        self.terms.iter().map(|(m, c)| (m.exps(), *c))
    }

    /// Constant term.
    pub fn constant_term(&self) -> f64 {
        self.terms.get(&Monomial::one(self.vars.len())).copied().unwrap_or(0.0)
    }

    /// Whether variable `idx` occurs with a positive exponent in any term.
    pub fn uses_index(&self, idx: usize) -> bool {
        self.terms.keys().any(|m| m.0[idx] > 0)
    }

    pub fn uses(&self, name: &str) -> bool {
        self.index_of(name).map(|i| self.uses_index(i)).unwrap_or(false)
    }

    /// Names of variables that actually occur.
    pub fn used_vars(&self) -> Vec<&str> {
        (0..self.vars.len())
            .filter(|&i| self.uses_index(i))
            .map(|i| self.vars[i].as_str())
            .collect()
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    /// Evaluates at `point` (one coordinate per variable of the space).
    pub fn eval(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.vars.len() {
            return Err(PolyError::DimensionMismatch { expected: self.vars.len(), got: point.len() });
        }
        Ok(self.eval_unchecked(point))
    }

    /// Evaluation without the dimension check; for inner loops.
    pub fn eval_unchecked(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.vars.len());
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut t = *c;
            for (x, &e) in point.iter().zip(&m.0) {
                for _ in 0..e {
                    t *= *x;
                }
            }
            acc += t;
        }
        acc
    }

    pub fn scale(&self, c: f64) -> Polynomial {
        let terms = self.terms.iter().map(|(m, k)| (m.0.clone(), k * c));
        Self::from_terms(self.vars.clone(), terms)
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut acc = Polynomial::constant(self.vars.clone(), 1.0);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Re-expresses the polynomial in `target`, which must contain every
    /// variable the polynomial actually uses.
    pub fn with_vars(&self, target: &Vars) -> Result<Polynomial, PolyError> {
        if Arc::ptr_eq(&self.vars, target) || self.vars[..] == target[..] {
            return Ok(Polynomial { vars: target.clone(), terms: self.terms.clone() });
        }
        let mut map = Vec::with_capacity(self.vars.len());
        for (i, name) in self.vars.iter().enumerate() {
            match target.iter().position(|t| t == name) {
                Some(j) => map.push(Some(j)),
                None if self.uses_index(i) => return Err(PolyError::MissingVariable(name.clone())),
                None => map.push(None),
            }
        }
        let terms = self.terms.iter().map(|(m, c)| {
            let mut e = vec![0; target.len()];
            for (i, &k) in m.0.iter().enumerate() {
                if let Some(j) = map[i] {
                    e[j] = k;
                }
            }
            (e, *c)
        });
        Ok(Self::from_terms(target.clone(), terms))
    }

    fn union_vars(&self, other: &Polynomial) -> Vars {
        if Arc::ptr_eq(&self.vars, &other.vars) || self.vars[..] == other.vars[..] {
            return self.vars.clone();
        }
        let mut names: Vec<String> = self.vars.to_vec();
        for v in other.vars.iter() {
            if !names.contains(v) {
                names.push(v.clone());
            }
        }
        names.into()
    }

    fn aligned(&self, other: &Polynomial) -> (Polynomial, Polynomial) {
        let u = self.union_vars(other);
        // union contains both spaces, so re-expression cannot fail
        (self.with_vars(&u).unwrap(), other.with_vars(&u).unwrap())
    }

    /// Formal partial derivative with respect to `name`; zero if absent.
    pub fn partial(&self, name: &str) -> Polynomial {
        match self.index_of(name) {
            Some(i) => self.partial_index(i),
            None => Polynomial::zero(self.vars.clone()),
        }
    }

    pub fn partial_index(&self, idx: usize) -> Polynomial {
        let terms = self.terms.iter().filter(|(m, _)| m.0[idx] > 0).map(|(m, c)| {
            let mut e = m.0.clone();
            let k = e[idx];
            e[idx] -= 1;
            (e, c * f64::from(k))
        });
        Self::from_terms(self.vars.clone(), terms)
    }

    /// Derivative along a polynomial vector field: `sum_i dp/dx_i * f_i`.
    pub fn lie_derivative(&self, field: &VectorField) -> Polynomial {
        let mut acc = Polynomial::zero(self.vars.clone());
        for (name, rhs) in &field.components {
            let d = self.partial(name);
            if d.is_zero() {
                continue;
            }
            acc = &acc + &(&d * rhs);
        }
        acc
    }

    /// Fixes some variables to numbers. The result lives in the space of the
    /// remaining variables.
    pub fn substitute(&self, bindings: &[(&str, f64)]) -> Result<Polynomial, PolyError> {
        let mut values: Vec<Option<f64>> = vec![None; self.vars.len()];
        for (name, v) in bindings {
            let i = self
                .index_of(name)
                .ok_or_else(|| PolyError::UnknownVariable(name.to_string()))?;
            values[i] = Some(*v);
        }
        let keep: Vec<usize> = (0..self.vars.len()).filter(|&i| values[i].is_none()).collect();
        let new_vars: Vars = keep.iter().map(|&i| self.vars[i].clone()).collect();
        let terms = self.terms.iter().map(|(m, c)| {
            let mut coef = *c;
            for (i, &e) in m.0.iter().enumerate() {
                if let Some(v) = values[i] {
                    for _ in 0..e {
                        coef *= v;
                    }
                }
            }
            (keep.iter().map(|&i| m.0[i]).collect(), coef)
        });
        Ok(Self::from_terms(new_vars, terms))
    }

    /// Replaces variables by polynomials. Replaced variables are removed from
    /// the space; variables of the replacements are added.
    pub fn compose(&self, bindings: &[(&str, &Polynomial)]) -> Result<Polynomial, PolyError> {
        for (name, _) in bindings {
            if self.index_of(name).is_none() {
                return Err(PolyError::UnknownVariable(name.to_string()));
            }
        }
        let mut names: Vec<String> = self.vars.to_vec();
        for (_, q) in bindings {
            for v in q.vars.iter() {
                if !names.contains(v) {
                    names.push(v.clone());
                }
            }
        }
        let full: Vars = names.clone().into();
        let me = self.with_vars(&full)?;
        let subs: Vec<(usize, Polynomial)> = bindings
            .iter()
            .map(|(name, q)| {
                let i = full.iter().position(|v| v == name).unwrap();
                Ok((i, q.with_vars(&full)?))
            })
            .collect::<Result<_, PolyError>>()?;
        let mut acc = Polynomial::zero(full.clone());
        for (m, c) in &me.terms {
            let mut e = m.0.clone();
            let mut term = Polynomial::zero(full.clone());
            let mut factor = Polynomial::constant(full.clone(), *c);
            for (i, q) in &subs {
                let k = e[*i];
                if k > 0 {
                    factor = &factor * &q.pow(k);
                    e[*i] = 0;
                }
            }
            term.terms.insert(Monomial(e), 1.0);
            acc = &acc + &(&term * &factor);
        }
        let keep: Vars = names
            .into_iter()
            .filter(|n| !bindings.iter().any(|(b, q)| b == n && !q.vars.contains(n)))
            .collect();
        acc.with_vars(&keep)
    }

    /// Iterates `(exponents, coefficient)` in descending canonical order.
    fn terms_desc(&self) -> impl Iterator<Item = (&Monomial, &f64)> {
        self.terms.iter().rev()
    }
}

impl PartialEq for Polynomial {
    fn eq(&self, other: &Self) -> bool {
        if self.vars[..] == other.vars[..] {
            return self.terms == other.terms;
        }
        let (a, b) = self.aligned(other);
        a.terms == b.terms
    }
}

fn combine(a: &Polynomial, b: &Polynomial, sign: f64) -> Polynomial {
    let (mut x, y) = if a.vars[..] == b.vars[..] {
        (a.clone(), b.clone())
    } else {
        a.aligned(b)
    };
    for (m, c) in y.terms {
        let e = x.terms.entry(m).or_insert(0.0);
        *e += sign * c;
    }
    x.terms.retain(|_, c| *c != 0.0);
    x
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        combine(self, rhs, 1.0)
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        combine(self, rhs, -1.0)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let (a, b) = if self.vars[..] == rhs.vars[..] {
            (self.clone(), rhs.clone())
        } else {
            self.aligned(rhs)
        };
        let mut map: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, ca) in &a.terms {
            for (mb, cb) in &b.terms {
                *map.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
            }
        }
        map.retain(|_, c| *c != 0.0);
        Polynomial { vars: a.vars, terms: map }
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

macro_rules! owned_binop {
    ($tr:ident, $f:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $f(self, rhs: Polynomial) -> Polynomial {
                (&self).$f(&rhs)
            }
        }
    };
}
owned_binop!(Add, add);
owned_binop!(Sub, sub);
owned_binop!(Mul, mul);

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// Formats a coefficient with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Canonical text: monomials in descending graded-lex order, each written as
/// `coef*var^e*...`, joined by `+`. The zero polynomial prints as `0`.
impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms_desc().enumerate() {
            if k > 0 {
                write!(f, "+")?;
            }
            write!(f, "{}", fmt_real(*c))?;
            for (name, &e) in self.vars.iter().zip(&m.0) {
                match e {
                    0 => {}
                    1 => write!(f, "*{name}")?,
                    _ => write!(f, "*{name}^{e}")?,
                }
            }
        }
        Ok(())
    }
}

/// A polynomial vector field: one derivative per state variable.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub components: Vec<(String, Polynomial)>,
}

impl VectorField {
    pub fn new(components: Vec<(String, Polynomial)>) -> Self {
        Self { components }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy() -> Vars {
        vars(&["x", "y"])
    }

    fn p(terms: &[(&[u32], f64)]) -> Polynomial {
        Polynomial::from_terms(xy(), terms.iter().map(|(e, c)| (e.to_vec(), *c)))
    }

    #[test]
    fn eval_examples() {
        let q = p(&[(&[2, 0], 2.0), (&[0, 1], 1.0)]);
        assert_eq!(q.eval(&[1.0, 3.0]).unwrap(), 5.0);
        assert_eq!(Polynomial::zero(xy()).eval(&[4.0, -2.0]).unwrap(), 0.0);
        assert!(matches!(q.eval(&[1.0]), Err(PolyError::DimensionMismatch { .. })));
    }

    #[test]
    fn droop_law_vanishes_at_setpoint() {
        let s = vars(&["v", "Q"]);
        let v = Polynomial::var(s.clone(), "v").unwrap();
        let q = Polynomial::var(s.clone(), "Q").unwrap();
        let vstar = Polynomial::constant(s.clone(), 0.48);
        let qstar = Polynomial::constant(s.clone(), 0.3);
        let rhs = &(&vstar - &v) + &(&qstar - &q).scale(0.05);
        assert_eq!(rhs.eval(&[0.48, 0.3]).unwrap(), 0.0);
    }

    #[test]
    fn partial_examples() {
        assert_eq!(p(&[(&[2, 1], 3.0)]).partial("x"), p(&[(&[1, 1], 6.0)]));
        assert!(p(&[(&[0, 0], 7.0)]).partial("x").is_zero());
        assert_eq!(p(&[(&[2, 0], 1.0), (&[0, 2], 1.0)]).partial("y"), p(&[(&[0, 1], 2.0)]));
        assert!(p(&[(&[1, 0], 1.0)]).partial("z").is_zero());
    }

    #[test]
    fn lie_derivative_rotation() {
        // h = x^2, f = (y, -x)
        let h = p(&[(&[2, 0], 1.0)]);
        let field = VectorField::new(vec![
            ("x".into(), p(&[(&[0, 1], 1.0)])),
            ("y".into(), p(&[(&[1, 0], -1.0)])),
        ]);
        let h1 = h.lie_derivative(&field);
        assert_eq!(h1, p(&[(&[1, 1], 2.0)]));
        let h2 = h1.lie_derivative(&field);
        assert_eq!(h2, p(&[(&[0, 2], 2.0), (&[2, 0], -2.0)]));
    }

    #[test]
    fn lie_derivative_identity_chain() {
        let s = vars(&["x", "u"]);
        let h = Polynomial::var(s.clone(), "x").unwrap();
        let u = Polynomial::var(s.clone(), "u").unwrap();
        let field = VectorField::new(vec![("x".into(), u.clone())]);
        assert_eq!(h.lie_derivative(&field), u);
    }

    #[test]
    fn substitute_examples() {
        let s = vars(&["x", "u"]);
        let x = Polynomial::var(s.clone(), "x").unwrap();
        let u = Polynomial::var(s.clone(), "u").unwrap();
        let xu = &x * &u;
        let r = xu.substitute(&[("u", 2.0)]).unwrap();
        assert_eq!(r.vars().len(), 1);
        assert_eq!(r, Polynomial::var(vars(&["x"]), "x").unwrap().scale(2.0));

        let x2 = &x * &x;
        assert_eq!(x2.substitute(&[]).unwrap(), x2);

        let d = (&x - &u).pow(2).substitute(&[("u", 1.0)]).unwrap();
        let sx = vars(&["x"]);
        let expected = Polynomial::from_terms(sx, [(vec![2], 1.0), (vec![1], -2.0), (vec![0], 1.0)]);
        assert_eq!(d, expected);
    }

    #[test]
    fn compose_replaces_inputs_with_feedback() {
        let s = vars(&["x", "u"]);
        let x = Polynomial::var(s.clone(), "x").unwrap();
        let u = Polynomial::var(s.clone(), "u").unwrap();
        // h1 = -2 x u with u = -x  ->  2 x^2
        let h1 = (&x * &u).scale(-2.0);
        let fb = Polynomial::var(vars(&["x"]), "x").unwrap().scale(-1.0);
        let cl = h1.compose(&[("u", &fb)]).unwrap();
        assert_eq!(cl.vars().len(), 1);
        assert_eq!(cl, Polynomial::from_terms(vars(&["x"]), [(vec![2], 2.0)]));
    }

    #[test]
    fn equality_across_spaces() {
        let a = Polynomial::var(vars(&["x"]), "x").unwrap();
        let b = Polynomial::var(vars(&["y", "x"]), "x").unwrap();
        assert_eq!(a, b);
        let sum = &a + &Polynomial::var(vars(&["y"]), "y").unwrap();
        assert_eq!(sum.vars().len(), 2);
    }

    #[test]
    fn canonical_text_descending() {
        let q = p(&[(&[0, 0], -1.0), (&[1, 0], 0.5), (&[1, 1], 3.0)]);
        assert_eq!(
            q.to_string(),
            "3.0000000000000000e0*x*y+5.0000000000000000e-1*x+-1.0000000000000000e0"
        );
        assert_eq!(Polynomial::zero(xy()).to_string(), "0");
    }

    #[test]
    fn with_vars_rejects_dropping_used_variable() {
        let q = p(&[(&[1, 0], 1.0)]);
        assert!(q.with_vars(&vars(&["y"])).is_err());
        assert!(q.with_vars(&vars(&["x"])).is_ok());
    }
}
