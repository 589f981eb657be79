use std::collections::HashMap;
use std::fmt;

use super::RuntimeError;
use crate::poly::IntervalBox;
use crate::switchgen::{shrink, Strategy, SwitchingArtifact};

/// Controller in charge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Nc,
    Bc,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Nc => "NC",
            Mode::Bc => "BC",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FscEval {
    pub h_hat: f64,
    pub lambda: f64,
    /// `h_hat - lambda <= 0`
    pub alpha: bool,
    /// `x` outside the restricted region for `u`
    pub beta: bool,
}

impl FscEval {
    pub fn fsc(&self) -> bool {
        self.alpha || self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RscEval {
    pub h: f64,
    pub h_dot: f64,
    /// `h >= m * eta * |h_dot|`
    pub margin: bool,
    pub inside: bool,
}

impl RscEval {
    pub fn rsc(&self) -> bool {
        self.margin && self.inside
    }
}

/// The three-case switching logic.
pub fn decide(c: Mode, fsc: bool, rsc: bool) -> Mode {
    match c {
        Mode::Nc if fsc => Mode::Bc,
        Mode::Bc if rsc => Mode::Nc,
        _ => c,
    }
}

/// Evaluates the switching conditions of one artifact. Per-action bounds are
/// cached by the exact bit pattern of the action.
pub struct Monitor<'a> {
    art: &'a SwitchingArtifact,
    m: u32,
    cache: HashMap<Vec<u64>, (f64, Option<IntervalBox>)>,
    global_region: Option<IntervalBox>,
    reverse_region: Option<IntervalBox>,
    point: Vec<f64>,
}

impl<'a> Monitor<'a> {
    pub fn new(art: &'a SwitchingArtifact) -> Self {
        Self::with_m(art, art.m).expect("artifact multiplier is valid")
    }

    /// Uses multiplier `m` for the reverse condition instead of the artifact's.
    pub fn with_m(art: &'a SwitchingArtifact, m: u32) -> Result<Self, RuntimeError> {
        if m < 2 {
            return Err(RuntimeError::BadController(format!("reverse-switch multiplier must exceed 1, got {m}")));
        }
        Ok(Self {
            art,
            m,
            cache: HashMap::new(),
            global_region: shrink(&art.admissible, &art.mu_dec_global, &art.mu_inc_global, 1.0),
            reverse_region: shrink(&art.admissible, &art.mu_dec_global, &art.mu_inc_global, f64::from(m)),
            point: vec![0.0; art.states.len() + art.inputs.len()],
        })
    }

    pub fn artifact(&self) -> &SwitchingArtifact {
        self.art
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    fn load(&mut self, x: &[f64], u: &[f64]) {
        let k = self.art.states.len();
        self.point[..k].copy_from_slice(x);
        self.point[k..].copy_from_slice(u);
    }

    pub fn h(&mut self, x: &[f64]) -> f64 {
        let k = self.art.states.len();
        self.point[..k].copy_from_slice(x);
        self.art.h().eval_unchecked(&self.point)
    }

    fn bounds(&mut self, u: &[f64]) -> Result<(f64, Option<IntervalBox>), RuntimeError> {
        if self.art.strategy == Strategy::Global {
            return Ok((self.art.lambda_global, self.global_region.clone()));
        }
        let key: Vec<u64> = u.iter().map(|v| v.to_bits()).collect();
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit.clone());
        }
        let lambda = self.art.lambda_bound(Some(u))?;
        let region = self.art.restricted_region(Some(u), 1)?;
        self.cache.insert(key, (lambda, region.clone()));
        Ok((lambda, region))
    }

    /// Forward switching condition for the proposed action `u`.
    pub fn fsc(&mut self, x: &[f64], u: &[f64]) -> Result<FscEval, RuntimeError> {
        let (lambda, region) = self.bounds(u)?;
        self.load(x, u);
        let h_hat = self.art.h_hat(&self.point);
        let beta = !region.is_some_and(|r| r.contains_strict(x));
        Ok(FscEval { h_hat, lambda, alpha: h_hat - lambda <= 0.0, beta })
    }

    /// Reverse switching condition; `u_bc` is the baseline action at `x`.
    pub fn rsc(&mut self, x: &[f64], u_bc: &[f64]) -> RscEval {
        self.load(x, u_bc);
        let h = self.art.h().eval_unchecked(&self.point);
        let h_dot = self.art.chain[1].eval_unchecked(&self.point);
        let margin = h >= f64::from(self.m) * self.art.eta * h_dot.abs();
        let inside = self.reverse_region.as_ref().is_some_and(|r| r.contains_strict(x));
        RscEval { h, h_dot, margin, inside }
    }

    /// One decision: consults the forward condition while the new controller
    /// is in charge and the reverse condition while the baseline is.
    pub fn dm_step(&mut self, x: &[f64], u: &[f64], u_bc: &[f64], c: Mode) -> Result<(Mode, Option<FscEval>, Option<RscEval>), RuntimeError> {
        Ok(match c {
            Mode::Nc => {
                let f = self.fsc(x, u)?;
                (decide(c, f.fsc(), false), Some(f), None)
            }
            Mode::Bc => {
                let r = self.rsc(x, u_bc);
                (decide(c, false, r.rsc()), None, Some(r))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::BarrierCertificate;
    use crate::model::load_str;
    use crate::switchgen::{derive_artifact, DeriveOptions};

    fn art(h: &str, strategy: Strategy) -> SwitchingArtifact {
        let sys = load_str(
            "states: x\ninputs: u\nparams:\n  eta = 0.1\ndynamics:\n  dx/dt = u\nadmissible:\n  x in [-2, 2]\ncontrols:\n  u in [-1, 1]\nunsafe:\n  unsafe when 1 - x < 0\nbaseline:\n  u = -x\n",
            &[],
        )
        .unwrap();
        let bc = BarrierCertificate::new(sys.state_poly(h).unwrap(), 1.0, "").unwrap();
        let opts = DeriveOptions { order: 1, m: 3, strategy, force: true, ..DeriveOptions::default() };
        derive_artifact(&sys, &bc, &opts).unwrap().0
    }

    #[test]
    fn fsc_examples() {
        let a = art("1 - x^2", Strategy::PerAction);
        let mut mon = Monitor::new(&a);
        let f = mon.fsc(&[0.9], &[1.0]).unwrap();
        assert!((f.h_hat - 0.01).abs() < 1e-15 && (f.lambda - 0.01).abs() < 1e-15);
        assert!(f.alpha && f.fsc());
        let f = mon.fsc(&[0.0], &[1.0]).unwrap();
        // h_hat = 1 + 0.1 * 0, lambda = 0.01
        assert!((f.h_hat - f.lambda - 0.99).abs() < 1e-15);
        assert!(!f.alpha && !f.beta && !f.fsc());
        let f = mon.fsc(&[1.95], &[1.0]).unwrap();
        assert!(f.beta && f.fsc());
        assert!(mon.fsc(&[0.0], &[1.5]).is_err());
    }

    #[test]
    fn rsc_examples() {
        // h = 1 - x, dh/dt = x under u = -x: h >= 0.3 x  <=>  x <= 1/1.3
        let a = art("1 - x", Strategy::PerAction);
        let mut mon = Monitor::new(&a);
        let r = mon.rsc(&[0.5], &[-0.5]);
        assert!((r.h - 0.5).abs() < 1e-15 && (r.h_dot - 0.5).abs() < 1e-15 && r.rsc());
        assert!(!mon.rsc(&[0.8], &[-0.8]).rsc());
        // A_{r,3} = (-1.7, 1.7)
        let r = mon.rsc(&[-1.75], &[1.0]);
        assert!(r.margin && !r.inside && !r.rsc());
    }

    #[test]
    fn decision_cases() {
        assert_eq!(decide(Mode::Nc, true, false), Mode::Bc);
        assert_eq!(decide(Mode::Bc, true, false), Mode::Bc);
        assert_eq!(decide(Mode::Nc, false, true), Mode::Nc);
        assert_eq!(decide(Mode::Bc, false, true), Mode::Nc);
    }

    #[test]
    fn global_strategy_is_more_conservative() {
        let p = art("1 - x^2", Strategy::PerAction);
        let g = art("1 - x^2", Strategy::Global);
        let (mut mp, mut mg) = (Monitor::new(&p), Monitor::new(&g));
        for i in 0..=40 {
            let x = -2.0 + 0.1 * i as f64;
            for u in [-1.0, -0.3, 0.0, 0.6, 1.0] {
                if mp.fsc(&[x], &[u]).unwrap().fsc() {
                    assert!(mg.fsc(&[x], &[u]).unwrap().fsc(), "x={x} u={u}");
                }
            }
        }
    }
}
