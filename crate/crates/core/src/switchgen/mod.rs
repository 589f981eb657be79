//! Derivation of the switching artifact: the Taylor chain of the barrier
//! certificate, remainder bound `lambda`, drift bounds `mu` and the restricted
//! admissible regions used by the forward and reverse switching conditions.

mod file;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::certify::{self, BarrierCertificate, CertReport, CertifyError, CheckOptions};
use crate::expr::ExprError;
use crate::model::DynSystem;
use crate::poly::{Interval, IntervalBox, PolyError, Polynomial, Vars};

pub const DEFAULT_ORDER: usize = 4;
pub const DEFAULT_M: u32 = 3;
pub const DEFAULT_DEPTH: u32 = 6;

#[derive(Debug, Error)]
pub enum SwitchgenError {
    #[error("Taylor order must be at least 1")]
    InvalidOrder,
    #[error("reverse-switch multiplier m must be an integer greater than 1, got {0}")]
    InvalidMultiplier(u32),
    #[error("action {0:?} lies outside the control box")]
    OutsideControls(Vec<f64>),
    #[error(
        "restricted admissible region is empty for `{state}`: [{lo}, {hi}] shrinks by {dec} + {inc}; \
         the system moves too far within one control period of {eta} s"
    )]
    EmptyRestrictedRegion { state: String, lo: f64, hi: f64, dec: f64, inc: f64, eta: f64 },
    #[error("certificate check failed:\n{0}\n(use force to derive anyway)")]
    CertificateRejected(Box<CertReport>),
    #[error("artifact format: {0}")]
    Format(String),
    #[error("artifact was derived for model {expected}, got model {got}")]
    ModelMismatch { expected: String, got: String },
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Whether `lambda` and `mu` are bounded per action or once over all of the
/// control box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    PerAction,
    Global,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::PerAction => "per-action",
            Strategy::Global => "global",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per-action" => Ok(Strategy::PerAction),
            "global" => Ok(Strategy::Global),
            _ => Err(format!("unknown strategy `{s}` (expected per-action or global)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeriveOptions {
    pub order: usize,
    pub m: u32,
    pub strategy: Strategy,
    /// bisection depth for the interval bounds
    pub depth: u32,
    /// derive even if the certificate check fails
    pub force: bool,
    pub check: CheckOptions,
}

impl Default for DeriveOptions {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            m: DEFAULT_M,
            strategy: Strategy::PerAction,
            depth: DEFAULT_DEPTH,
            force: false,
            check: CheckOptions::default(),
        }
    }
}

/// Everything the runtime needs to evaluate the switching conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingArtifact {
    pub order: usize,
    pub eta: f64,
    pub m: u32,
    pub strategy: Strategy,
    pub model_hash: String,
    pub depth: u32,
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    /// `h^0 .. h^(n+1)` over `states ++ inputs`
    pub chain: Vec<Polynomial>,
    pub lambda_global: f64,
    pub mu_dec_global: Vec<f64>,
    pub mu_inc_global: Vec<f64>,
    pub admissible: IntervalBox,
    pub controls: IntervalBox,
    pub unsafe_set: Vec<Polynomial>,
    pub gamma: f64,
    pub dynamics: Vec<Polynomial>,
    pub baseline: Option<Vec<Polynomial>>,
}

/// `[h, L_f h, L_f^2 h, ..., L_f^(n+1) h]` with the input held constant.
pub fn taylor_chain(h: &Polynomial, sys: &DynSystem, n: usize) -> Result<Vec<Polynomial>, SwitchgenError> {
    if n < 1 {
        return Err(SwitchgenError::InvalidOrder);
    }
    let field = sys.vector_field();
    let mut out = vec![h.with_vars(sys.space())?];
    for i in 0..=n {
        let next = out[i].lie_derivative(&field);
        out.push(next);
    }
    Ok(out)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Rounds a non-negative bound upward by a few ulps to cover the rounding of
/// the final scaling.
fn widen_up(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        (x * (1.0 + 4.0 * f64::EPSILON)).next_up()
    }
}

/// `mag * eta^(k) / k!` rounded upward.
fn remainder(mag: f64, eta: f64, k: usize) -> f64 {
    widen_up(mag * eta.powi(k as i32) / factorial(k))
}

/// `(mu_dec, mu_inc)` from an enclosure of one state derivative.
fn drift(range: Interval, eta: f64) -> (f64, f64) {
    (widen_up((eta * range.lo).min(0.0).abs()), widen_up((eta * range.hi).max(0.0)))
}

/// Shrinks `a` by `mult * mu` on each side. The result is an open box;
/// `None` when some side collapses.
pub fn shrink(a: &IntervalBox, mu_dec: &[f64], mu_inc: &[f64], mult: f64) -> Option<IntervalBox> {
    let mut out = Vec::with_capacity(a.len());
    for ((b, d), i) in a.bounds().iter().zip(mu_dec).zip(mu_inc) {
        // round inward so membership tests stay conservative
        let lo = (b.lo + mult * d).next_up();
        let hi = (b.hi - mult * i).next_down();
        if !(lo < hi) {
            return None;
        }
        out.push(Interval { lo, hi });
    }
    IntervalBox::new(a.vars().clone(), out).ok()
}

impl SwitchingArtifact {
    pub fn h(&self) -> &Polynomial {
        &self.chain[0]
    }

    /// `h^1 .. h^(n+1)`
    pub fn lie(&self) -> &[Polynomial] {
        &self.chain[1..]
    }

    pub fn space(&self) -> &Vars {
        self.chain[0].vars()
    }

    fn check_action(&self, u: &[f64]) -> Result<(), SwitchgenError> {
        if u.len() != self.inputs.len() || !self.controls.contains(u) {
            return Err(SwitchgenError::OutsideControls(u.to_vec()));
        }
        Ok(())
    }

    fn bindings<'a>(&'a self, u: &[f64]) -> Vec<(&'a str, f64)> {
        self.inputs.iter().map(String::as_str).zip(u.iter().copied()).collect()
    }

    /// Enclosure over A with the action fixed, or over A x controls for `None`.
    fn enclose(&self, p: &Polynomial, u: Option<&[f64]>) -> Result<Interval, SwitchgenError> {
        match u {
            Some(u) => {
                let q = p.substitute(&self.bindings(u))?;
                Ok(q.bound_refined(&self.admissible, self.depth)?)
            }
            None => Ok(p.bound_refined(&self.admissible.product(&self.controls), self.depth)?),
        }
    }

    /// Upper bound on the Lagrange remainder of the order-n prediction,
    /// `sup |h^(n+1)| * eta^(n+1) / (n+1)!`.
    pub fn lambda_bound(&self, u: Option<&[f64]>) -> Result<f64, SwitchgenError> {
        if let Some(u) = u {
            self.check_action(u)?;
        }
        let top = &self.chain[self.order + 1];
        if top.is_zero() {
            return Ok(0.0);
        }
        let r = self.enclose(top, u)?;
        Ok(remainder(r.mag(), self.eta, self.order + 1))
    }

    /// Per-state bounds on how far one control period can move each state
    /// down (`mu_dec`) and up (`mu_inc`) while inside A.
    pub fn mu_bounds(&self, u: Option<&[f64]>) -> Result<(Vec<f64>, Vec<f64>), SwitchgenError> {
        if let Some(u) = u {
            self.check_action(u)?;
        }
        let mut dec = Vec::with_capacity(self.dynamics.len());
        let mut inc = Vec::with_capacity(self.dynamics.len());
        for f in &self.dynamics {
            let (d, i) = drift(self.enclose(f, u)?, self.eta);
            dec.push(d);
            inc.push(i);
        }
        Ok((dec, inc))
    }

    /// `A_r(u)` for multiplier 1, `A_{r,m}` for multiplier m; `None` is the
    /// empty region.
    pub fn restricted_region(&self, u: Option<&[f64]>, multiplier: u32) -> Result<Option<IntervalBox>, SwitchgenError> {
        let (dec, inc) = match u {
            None => (self.mu_dec_global.clone(), self.mu_inc_global.clone()),
            Some(_) => self.mu_bounds(u)?,
        };
        Ok(shrink(&self.admissible, &dec, &inc, f64::from(multiplier)))
    }

    /// Order-n Taylor prediction of `h` one period ahead; `point = x ++ u`.
    pub fn h_hat(&self, point: &[f64]) -> f64 {
        let mut acc = 0.0;
        let mut coef = 1.0;
        for i in 0..=self.order {
            if i > 0 {
                coef *= self.eta / i as f64;
            }
            acc += coef * self.chain[i].eval_unchecked(point);
        }
        acc
    }

    pub fn check_model(&self, sys: &DynSystem) -> Result<(), SwitchgenError> {
        let got = sys.hash();
        if got != self.model_hash {
            return Err(SwitchgenError::ModelMismatch { expected: self.model_hash.clone(), got });
        }
        Ok(())
    }
}

/// Builds the artifact. The certificate is first checked against the
/// system's baseline controller; failure is an error unless `force` is set.
/// Returns the check report when a check was run.
pub fn derive_artifact(
    sys: &DynSystem,
    bc: &BarrierCertificate,
    opts: &DeriveOptions,
) -> Result<(SwitchingArtifact, Option<CertReport>), SwitchgenError> {
    if opts.m < 2 {
        return Err(SwitchgenError::InvalidMultiplier(opts.m));
    }
    let report = match certify::baseline_feedback(sys) {
        Ok(k) => {
            let r = certify::check_bac(sys, bc, &k, opts.check)?;
            if !(r.is_certified() && r.margin_is_sound()) {
                if !opts.force {
                    return Err(SwitchgenError::CertificateRejected(Box::new(r)));
                }
                log::warn!("deriving with an unverified certificate");
            }
            Some(r)
        }
        Err(e) if opts.force => {
            log::warn!("certificate not checked: {e}");
            None
        }
        Err(e) => return Err(e.into()),
    };

    let chain = taylor_chain(&bc.h, sys, opts.order)?;
    let mut art = SwitchingArtifact {
        order: opts.order,
        eta: sys.eta(),
        m: opts.m,
        strategy: opts.strategy,
        model_hash: sys.hash(),
        depth: opts.depth,
        states: sys.states().to_vec(),
        inputs: sys.inputs().to_vec(),
        chain,
        lambda_global: 0.0,
        mu_dec_global: Vec::new(),
        mu_inc_global: Vec::new(),
        admissible: sys.admissible().clone(),
        controls: sys.controls().clone(),
        unsafe_set: sys.unsafe_set().to_vec(),
        gamma: bc.gamma,
        dynamics: sys.dynamics().to_vec(),
        baseline: sys.baseline().map(<[Polynomial]>::to_vec),
    };
    art.lambda_global = art.lambda_bound(None)?;
    let (dec, inc) = art.mu_bounds(None)?;
    for (k, b) in art.admissible.bounds().iter().enumerate() {
        if !(b.lo + dec[k] < b.hi - inc[k]) {
            return Err(SwitchgenError::EmptyRestrictedRegion {
                state: art.states[k].clone(),
                lo: b.lo,
                hi: b.hi,
                dec: dec[k],
                inc: inc[k],
                eta: art.eta,
            });
        }
    }
    art.mu_dec_global = dec;
    art.mu_inc_global = inc;
    Ok((art, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_str;

    const LINE: &str = "states: x\ninputs: u\nparams:\n  eta = 0.1\ndynamics:\n  dx/dt = u\nadmissible:\n  x in [-2, 2]\ncontrols:\n  u in [-1, 1]\nunsafe:\n  unsafe when 1 - x < 0\nbaseline:\n  u = -x\n";

    fn line() -> DynSystem {
        load_str(LINE, &[]).unwrap()
    }

    fn p(sys: &DynSystem, text: &str) -> Polynomial {
        crate::expr::parse_polynomial(text, sys.space()).unwrap()
    }

    #[test]
    fn chains() {
        let s = line();
        let c = taylor_chain(&s.state_poly("x").unwrap(), &s, 1).unwrap();
        assert_eq!(c, vec![p(&s, "x"), p(&s, "u"), p(&s, "0")]);
        let c = taylor_chain(&s.state_poly("1 - x^2").unwrap(), &s, 1).unwrap();
        assert_eq!(c, vec![p(&s, "1 - x^2"), p(&s, "-2*x*u"), p(&s, "-2*u^2")]);
        let z = load_str("states: x\ndynamics:\n  dx/dt = 0\nadmissible:\n  x in [-1, 1]\n", &[]).unwrap();
        let c = taylor_chain(&z.state_poly("x^3").unwrap(), &z, 1).unwrap();
        assert!(c[1].is_zero() && c[2].is_zero());
        assert!(matches!(taylor_chain(&z.state_poly("x").unwrap(), &z, 0), Err(SwitchgenError::InvalidOrder)));
    }

    fn art(sys: &DynSystem, h: &str, n: usize) -> SwitchingArtifact {
        let bc = BarrierCertificate::new(sys.state_poly(h).unwrap(), 1.0, "").unwrap();
        let opts = DeriveOptions { order: n, force: true, ..DeriveOptions::default() };
        derive_artifact(sys, &bc, &opts).unwrap().0
    }

    #[test]
    fn worked_line_artifact() {
        let s = line();
        let a = art(&s, "1 - x", 1);
        assert_eq!(a.lie(), [p(&s, "-u"), p(&s, "0")]);
        assert_eq!(a.lambda_global, 0.0);
        assert_eq!(a.lambda_bound(Some(&[0.3])).unwrap(), 0.0);
    }

    #[test]
    fn lambda_examples() {
        // h = 1 - x^2, dx/dt = u, u = 1: h'' = -2, lambda = 2 * 0.01 / 2
        let s = line();
        let a = art(&s, "1 - x^2", 1);
        let l = a.lambda_bound(Some(&[1.0])).unwrap();
        assert!(l >= 0.01 && l < 0.01 * (1.0 + 1e-14), "{l}");
        assert!(a.lambda_bound(Some(&[2.0])).is_err());
        // h = x^2 with dx/dt = 1
        let one = load_str("states: x\nparams:\n  eta = 0.1\ndynamics:\n  dx/dt = 1\nadmissible:\n  x in [-2, 2]\n", &[]).unwrap();
        let a = art(&one, "x^2", 1);
        let l = a.lambda_bound(Some(&[])).unwrap();
        assert!(l >= 0.01 && l < 0.01 * (1.0 + 1e-14), "{l}");
    }

    #[test]
    fn mu_examples() {
        let decay = load_str("states: x\nparams:\n  eta = 0.1\ndynamics:\n  dx/dt = -x\nadmissible:\n  x in [-1, 1]\n", &[]).unwrap();
        let a = art(&decay, "1 - x^2", 1);
        let (d, i) = a.mu_bounds(Some(&[])).unwrap();
        assert!((d[0] - 0.1).abs() < 1e-15 && (i[0] - 0.1).abs() < 1e-15);
        assert!(d[0] >= 0.1 && i[0] >= 0.1);
        let s = line();
        let a = art(&s, "1 - x", 1);
        let (d, i) = a.mu_bounds(Some(&[1.0])).unwrap();
        assert_eq!(d[0], 0.0);
        assert!((i[0] - 0.1).abs() < 1e-15);
        let zero = load_str("states: x\ndynamics:\n  dx/dt = 0\nadmissible:\n  x in [-1, 1]\n", &[]).unwrap();
        let (d, i) = art(&zero, "1 - x^2", 1).mu_bounds(None).unwrap();
        assert_eq!((d[0], i[0]), (0.0, 0.0));
    }

    #[test]
    fn restricted_examples() {
        let a = IntervalBox::new(crate::poly::vars(&["x"]), vec![Interval { lo: -1.0, hi: 1.0 }]).unwrap();
        let r = shrink(&a, &[0.1], &[0.1], 1.0).unwrap();
        assert!((r.bounds()[0].lo + 0.9).abs() < 1e-15 && (r.bounds()[0].hi - 0.9).abs() < 1e-15);
        assert!(!r.contains_strict(&[0.9]) && r.contains_strict(&[0.899_999]));
        let r = shrink(&a, &[0.1], &[0.1], 3.0).unwrap();
        assert!((r.bounds()[0].hi - 0.7).abs() < 1e-15);
        // 0.6 per side still leaves (-0.4, 0.4); collapse needs 2*mu >= width
        let r = shrink(&a, &[0.6], &[0.6], 1.0).unwrap();
        assert!((r.bounds()[0].hi - 0.4).abs() < 1e-15);
        assert!(shrink(&a, &[1.0], &[1.0], 1.0).is_none());
        assert!(shrink(&a, &[0.3], &[0.4], 3.0).is_none());
    }

    #[test]
    fn too_fast_system_is_refused() {
        let s = load_str(&LINE.replace("eta = 0.1", "eta = 3"), &[]).unwrap();
        let bc = BarrierCertificate::new(s.state_poly("1 - x").unwrap(), 1.0, "").unwrap();
        let r = derive_artifact(&s, &bc, &DeriveOptions { force: true, ..DeriveOptions::default() });
        assert!(matches!(r, Err(SwitchgenError::EmptyRestrictedRegion { .. })));
    }

    #[test]
    fn unverified_certificate_needs_force() {
        let s = line();
        let bc = BarrierCertificate::new(s.state_poly("x - 1").unwrap(), 1.0, "").unwrap();
        let r = derive_artifact(&s, &bc, &DeriveOptions::default());
        assert!(matches!(r, Err(SwitchgenError::CertificateRejected(_))));
    }

    #[test]
    fn m1_artifact() {
        let s = crate::model::builtin("M1", &[]).unwrap();
        let h = s.state_poly(crate::model::builtin_certificate("M1").unwrap()).unwrap();
        let bc = BarrierCertificate::new(h, 1.0, "").unwrap();
        let (a, rep) = derive_artifact(&s, &bc, &DeriveOptions::default()).unwrap();
        assert!(rep.unwrap().is_certified());
        assert_eq!(a.lambda_global, 0.0);
        assert!(a.chain[3].is_zero());
        assert!(a.mu_inc_global[0] > 0.0 && a.mu_inc_global[0] < 1e-3);
    }
}
