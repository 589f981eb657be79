//! Barrier-certificate validation by sampling plus interval margins, and
//! extraction of a certificate from a Lyapunov function's sub-level set.
//!
//! A certificate `h` with gain `gamma` must satisfy, over the admissible box:
//!
//! 1. `h(x) >= 0` where no unsafe polynomial is negative,
//! 2. `h(x) < 0` on the unsafe set,
//! 3. `dh/dt + gamma * h >= 0` along the closed loop.
//!
//! "Certified on grid" means no sample violated any clause. It is weaker than
//! a sum-of-squares proof. The interval margin of clause 3 is sound: a
//! non-negative lower endpoint proves the clause on the whole box.

mod file;
mod lyapunov;

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

pub use lyapunov::{lyap_sublevel_bac, SublevelReport};

use crate::model::DynSystem;
use crate::poly::{Interval, IntervalBox, PolyError, Polynomial};
use crate::sampling::halton_point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("sample budget must be positive")]
    ZeroBudget,
    #[error("class-K gain must be positive, got {0}")]
    InvalidGain(f64),
    #[error("closed loop needs {expected} feedback laws, got {got}")]
    FeedbackArity { expected: usize, got: usize },
    #[error("system has no baseline controller to close the loop with")]
    NoBaseline,
    #[error("Lyapunov candidate is negative at {0:?}")]
    NegativeLyapunov(Vec<f64>),
    #[error("the unsafe set does not meet the admissible box")]
    UnreachableUnsafeSet,
    #[error("sub-level value c = {0} is not positive; the unsafe set touches the Lyapunov minimum")]
    NonPositiveLevel(f64),
    #[error("certificate file: {0}")]
    Format(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// `h` together with the gain of the linear class-K function `s -> gamma*s`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierCertificate {
    pub h: Polynomial,
    pub gamma: f64,
    pub note: String,
}

impl BarrierCertificate {
    pub fn new(h: Polynomial, gamma: f64, note: impl Into<String>) -> Result<Self, CertifyError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(CertifyError::InvalidGain(gamma));
        }
        Ok(Self { h, gamma, note: note.into() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clause {
    /// `h >= 0` outside the unsafe set
    SafeNonNegative,
    /// `h < 0` on the unsafe set
    UnsafeNegative,
    /// `dh/dt + gamma*h >= 0`
    Derivative,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Clause::SafeNonNegative => "h >= 0 outside the unsafe set",
            Clause::UnsafeNegative => "h < 0 on the unsafe set",
            Clause::Derivative => "dh/dt + gamma*h >= 0",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    CertifiedOnGrid,
    /// `sample` is the 1-based index of the witness in sample order
    Falsified { clause: Clause, witness: Vec<f64>, value: f64, sample: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertReport {
    pub verdict: Verdict,
    pub samples: usize,
    /// smallest `h` over safe samples
    pub min_safe_h: f64,
    /// largest `h` over unsafe samples (`-inf` when none were unsafe)
    pub max_unsafe_h: f64,
    /// smallest sampled `dh/dt + gamma*h`
    pub min_derivative: f64,
    /// interval enclosure of `dh/dt + gamma*h` over the admissible box
    pub margin: Interval,
    pub margin_depth: u32,
    /// lower bound on `dh/dt + gamma*h` over A from adaptive branch and bound
    pub proved_lower: f64,
}

impl CertReport {
    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::CertifiedOnGrid
    }

    /// True when the interval margin proves the derivative clause on all of A.
    pub fn margin_is_sound(&self) -> bool {
        self.margin.lo >= 0.0 || self.proved_lower >= 0.0
    }
}

impl fmt::Display for CertReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.verdict {
            Verdict::CertifiedOnGrid => writeln!(f, "verdict: certified on grid ({} samples; not a sum-of-squares proof)", self.samples)?,
            Verdict::Falsified { clause, witness, value, sample } => {
                writeln!(f, "verdict: falsified at sample {sample} of {}", self.samples)?;
                writeln!(f, "violated: {clause}")?;
                writeln!(f, "witness: {witness:?} (value {value:e})")?;
            }
        }
        writeln!(f, "min h on safe samples: {:e}", self.min_safe_h)?;
        writeln!(f, "max h on unsafe samples: {:e}", self.max_unsafe_h)?;
        writeln!(f, "min dh/dt + gamma*h on samples: {:e}", self.min_derivative)?;
        writeln!(f, "interval margin (depth {}): {}", self.margin_depth, self.margin)?;
        write!(
            f,
            "branch-and-bound lower bound: {:e} ({})",
            self.proved_lower,
            if self.margin_is_sound() { "proves the derivative clause on A" } else { "inconclusive" }
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    /// total number of samples, grid centers included
    pub budget: usize,
    /// bisection depth of the sampled box grid and of the interval margin
    pub depth: u32,
    /// split budget of the branch and bound on the derivative clause
    pub max_splits: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { budget: 20_000, depth: 6, max_splits: 50_000 }
    }
}

/// The baseline controller of `sys` as feedback laws.
pub fn baseline_feedback(sys: &DynSystem) -> Result<Vec<Polynomial>, CertifyError> {
    sys.baseline().map(<[Polynomial]>::to_vec).ok_or(CertifyError::NoBaseline)
}

/// `dh/dt + gamma*h` along `dx/dt = f(x, k(x))`, as a polynomial over the
/// states.
pub fn closed_loop_condition(sys: &DynSystem, bc: &BarrierCertificate, feedback: &[Polynomial]) -> Result<Polynomial, CertifyError> {
    if feedback.len() != sys.inputs().len() {
        return Err(CertifyError::FeedbackArity { expected: sys.inputs().len(), got: feedback.len() });
    }
    let h = bc.h.with_vars(sys.space())?;
    let hdot = h.lie_derivative(&sys.vector_field());
    let bindings: Vec<(&str, &Polynomial)> = sys.inputs().iter().map(String::as_str).zip(feedback).collect();
    let closed = if bindings.is_empty() { hdot } else { hdot.compose(&bindings)? };
    let cond = &closed + &bc.h.scale(bc.gamma);
    Ok(cond.with_vars(sys.state_space())?)
}

/// Interval enclosure of `dh/dt + gamma*h` over A at a bisection depth.
pub fn derivative_margin(sys: &DynSystem, bc: &BarrierCertificate, feedback: &[Polynomial], depth: u32) -> Result<Interval, CertifyError> {
    let cond = closed_loop_condition(sys, bc, feedback)?;
    Ok(cond.bound_refined(sys.admissible(), depth)?)
}

/// Centers of the `2^depth` boxes obtained by repeatedly halving the widest
/// side (relative to A).
fn grid_centers(a: &IntervalBox, depth: u32) -> Vec<Vec<f64>> {
    let widths: Vec<f64> = a.bounds().iter().map(Interval::width).collect();
    let mut boxes = vec![a.bounds().to_vec()];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(boxes.len() * 2);
        for b in boxes {
            let i = (0..b.len())
                .max_by(|&i, &j| (b[i].width() / widths[i]).total_cmp(&(b[j].width() / widths[j])).then(j.cmp(&i)))
                .unwrap_or(0);
            let mid = b[i].midpoint();
            let mut l = b.clone();
            let mut r = b;
            l[i].hi = mid;
            r[i].lo = mid;
            next.push(l);
            next.push(r);
        }
        boxes = next;
    }
    boxes.iter().map(|b| b.iter().map(Interval::midpoint).collect()).collect()
}

/// Samples the three clauses on `budget` points of A: box-grid centers
/// first, then Halton points. The first violating sample (in sample order)
/// of the highest-priority clause is reported as the witness.
pub fn check_bac(sys: &DynSystem, bc: &BarrierCertificate, feedback: &[Polynomial], opts: CheckOptions) -> Result<CertReport, CertifyError> {
    if opts.budget == 0 {
        return Err(CertifyError::ZeroBudget);
    }
    let cond = closed_loop_condition(sys, bc, feedback)?;
    let h = bc.h.with_vars(sys.state_space())?;
    let a = sys.admissible();
    let mut grid = grid_centers(a, opts.depth);
    grid.truncate(opts.budget);
    let total = opts.budget;

    let values: Vec<(f64, f64, f64)> = (0..total)
        .into_par_iter()
        .map(|k| {
            let x = if k < grid.len() { grid[k].clone() } else { halton_point((k - grid.len() + 1) as u64, a) };
            (h.eval_unchecked(&x), sys.safety_margin(&x), cond.eval_unchecked(&x))
        })
        .collect();

    let mut first: [Option<(usize, f64)>; 3] = [None; 3];
    let mut min_safe_h = f64::INFINITY;
    let mut max_unsafe_h = f64::NEG_INFINITY;
    let mut min_derivative = f64::INFINITY;
    for (k, &(hv, g, d)) in values.iter().enumerate() {
        if g >= 0.0 {
            min_safe_h = min_safe_h.min(hv);
            if hv < 0.0 && first[0].is_none() {
                first[0] = Some((k, hv));
            }
        } else {
            max_unsafe_h = max_unsafe_h.max(hv);
            if hv >= 0.0 && first[1].is_none() {
                first[1] = Some((k, hv));
            }
        }
        min_derivative = min_derivative.min(d);
        if d < 0.0 && first[2].is_none() {
            first[2] = Some((k, d));
        }
    }
    // sign clauses take precedence over the derivative clause
    let clauses = [Clause::SafeNonNegative, Clause::UnsafeNegative, Clause::Derivative];
    let verdict = match clauses.into_iter().zip(first).find_map(|(c, f)| f.map(|f| (c, f))) {
        None => Verdict::CertifiedOnGrid,
        Some((clause, (k, value))) => {
            let witness = if k < grid.len() { grid[k].clone() } else { halton_point((k - grid.len() + 1) as u64, a) };
            Verdict::Falsified { clause, witness, value, sample: k + 1 }
        }
    };
    let margin = cond.bound_refined(a, opts.depth)?;
    let proved_lower = if margin.lo >= 0.0 { margin.lo } else { cond.min_bound(a, 0.0, opts.max_splits)?.0 };
    Ok(CertReport {
        verdict,
        samples: total,
        min_safe_h,
        max_unsafe_h,
        min_derivative,
        margin,
        margin_depth: opts.depth,
        proved_lower,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_str;

    const DISK: &str = "states: x\ninputs: u\ndynamics:\n  dx/dt = u\nadmissible:\n  x in [-2, 2]\ncontrols:\n  u in [-2, 2]\nunsafe:\n  unsafe when 1 - x^2 < 0\n";

    fn setup(gain: f64) -> (DynSystem, BarrierCertificate, Vec<Polynomial>) {
        let sys = load_str(DISK, &[]).unwrap();
        let h = sys.state_poly("1 - x^2").unwrap();
        let k = sys.state_poly("x").unwrap().scale(gain);
        (sys, BarrierCertificate::new(h, 1.0, "").unwrap(), vec![k])
    }

    #[test]
    fn stable_loop_certifies() {
        let (sys, bc, k) = setup(-1.0);
        // dh/dt + h = 2x^2 + 1 - x^2 = x^2 + 1
        let cond = closed_loop_condition(&sys, &bc, &k).unwrap();
        assert_eq!(cond, sys.state_poly("x^2 + 1").unwrap());
        let r = check_bac(&sys, &bc, &k, CheckOptions::default()).unwrap();
        assert!(r.is_certified(), "{r}");
        assert!(r.margin_is_sound());
        assert!(r.margin.lo >= 1.0 - 1e-12);
    }

    #[test]
    fn unstable_loop_is_falsified_near_one() {
        let (sys, bc, k) = setup(1.0);
        let r = check_bac(&sys, &bc, &k, CheckOptions::default()).unwrap();
        match &r.verdict {
            Verdict::Falsified { clause: Clause::Derivative, witness, value, .. } => {
                assert!(*value < 0.0);
                // 1 - 3x^2 < 0 exactly when |x| > 1/sqrt(3)
                assert!(witness[0].abs() > 3f64.sqrt().recip());
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn negative_constant_fails_first_clause() {
        let (sys, _, k) = setup(-1.0);
        let bc = BarrierCertificate::new(sys.state_poly("-1").unwrap(), 1.0, "").unwrap();
        let r = check_bac(&sys, &bc, &k, CheckOptions { budget: 10, depth: 2, max_splits: 10 }).unwrap();
        assert!(matches!(r.verdict, Verdict::Falsified { clause: Clause::SafeNonNegative, .. }));
    }

    #[test]
    fn zero_budget_and_bad_gain() {
        let (sys, bc, k) = setup(-1.0);
        assert_eq!(check_bac(&sys, &bc, &k, CheckOptions { budget: 0, depth: 2, max_splits: 10 }).unwrap_err(), CertifyError::ZeroBudget);
        assert!(BarrierCertificate::new(bc.h.clone(), 0.0, "").is_err());
    }

    #[test]
    fn margin_tightens_with_depth() {
        let (sys, bc, k) = setup(-1.0);
        let mut prev = derivative_margin(&sys, &bc, &k, 0).unwrap();
        for d in 1..8 {
            let m = derivative_margin(&sys, &bc, &k, d).unwrap();
            assert!(prev.contains_interval(&m), "depth {d}: {m} not inside {prev}");
            prev = m;
        }
    }

    #[test]
    fn m1_droop_certificate_is_proved() {
        let sys = crate::model::builtin("M1", &[]).unwrap();
        let h = sys.state_poly(crate::model::builtin_certificate("M1").unwrap()).unwrap();
        let bc = BarrierCertificate::new(h, 1.0, "band").unwrap();
        let k = baseline_feedback(&sys).unwrap();
        let r = check_bac(&sys, &bc, &k, CheckOptions::default()).unwrap();
        assert!(r.is_certified(), "{r}");
        assert!(r.margin_is_sound(), "{r}");
    }
}
