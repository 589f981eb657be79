use std::fmt;
use std::io::Write;

use super::controller::{Controller, Response};
use super::integrate::integrate_period_observed;
use super::monitor::{FscEval, Mode, Monitor, RscEval};
use super::RuntimeError;
use crate::model::DynSystem;
use crate::poly::fmt_real;
use crate::switchgen::SwitchingArtifact;

pub const DEFAULT_SUBSTEPS: usize = 8;
pub const DEFAULT_HORIZON: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub horizon: f64,
    pub substeps: usize,
    pub shield: bool,
    /// reverse-switch multiplier; the artifact's when `None`
    pub m: Option<u32>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { horizon: DEFAULT_HORIZON, substeps: DEFAULT_SUBSTEPS, shield: true, m: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Forward,
    Reverse,
    Timeout,
    Clamp,
    Violation,
    End,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Forward => "forward",
            EventKind::Reverse => "reverse",
            EventKind::Timeout => "timeout",
            EventKind::Clamp => "clamp",
            EventKind::Violation => "violation",
            EventKind::End => "end",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    /// control period; for a violation, the period count `ceil(t / eta)`
    pub step: usize,
    pub t: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub mode: Mode,
    pub h: f64,
    pub fsc: Option<FscEval>,
    pub rsc: Option<RscEval>,
    pub events: Vec<EventKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub t: f64,
    pub step: usize,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub eta: f64,
    pub shield: bool,
    pub rows: Vec<Row>,
    pub events: Vec<Event>,
    pub violation: Option<Violation>,
    /// smallest `min_k g_k` over every substep
    pub min_margin: f64,
    pub final_state: Vec<f64>,
}

impl RunRecord {
    fn steps(&self, kind: EventKind) -> impl Iterator<Item = usize> + '_ {
        self.events.iter().filter(move |e| e.kind == kind).map(|e| e.step)
    }

    pub fn first_forward(&self) -> Option<usize> {
        self.steps(EventKind::Forward).next()
    }

    pub fn forward_count(&self) -> usize {
        self.steps(EventKind::Forward).count()
    }

    /// First period whose forward condition held, whether or not it acted.
    pub fn first_fsc(&self) -> Option<usize> {
        self.rows.iter().position(|r| r.fsc.is_some_and(|f| f.fsc()))
    }

    /// Periods from each forward switch to the reverse switch that ends it.
    pub fn forward_reverse_gaps(&self) -> Vec<usize> {
        let mut gaps = Vec::new();
        let mut open = None;
        for e in &self.events {
            match e.kind {
                EventKind::Forward => open = Some(e.step),
                EventKind::Reverse => {
                    if let Some(s) = open.take() {
                        gaps.push(e.step - s);
                    }
                }
                _ => {}
            }
        }
        gaps
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(self.states.iter().cloned());
        h.extend(self.inputs.iter().cloned());
        h.extend(["controller", "h", "alpha", "beta", "fsc", "rsc", "event"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), RuntimeError> {
        let flag = |b: Option<bool>| match b {
            Some(true) => "1".to_string(),
            Some(false) => "0".to_string(),
            None => String::new(),
        };
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| RuntimeError::Io(e.to_string());
        out.write_record(self.csv_header()).map_err(io)?;
        for r in &self.rows {
            let mut rec = vec![fmt_real(r.t)];
            rec.extend(r.x.iter().map(|v| fmt_real(*v)));
            rec.extend(r.u.iter().map(|v| fmt_real(*v)));
            rec.push(r.mode.to_string());
            rec.push(fmt_real(r.h));
            rec.push(flag(r.fsc.map(|f| f.alpha)));
            rec.push(flag(r.fsc.map(|f| f.beta)));
            rec.push(flag(r.fsc.map(|f| f.fsc())));
            rec.push(flag(r.rsc.map(|f| f.rsc())));
            rec.push(r.events.iter().map(ToString::to_string).collect::<Vec<_>>().join(";"));
            out.write_record(rec).map_err(io)?;
        }
        out.flush().map_err(|e| RuntimeError::Io(e.to_string()))
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }
}

fn expect_action(r: Response, who: &str) -> Result<(Vec<f64>, bool), RuntimeError> {
    match r {
        Response::Action { u, clamped } => Ok((u, clamped)),
        Response::Timeout => Err(RuntimeError::BadController(format!("{who} timed out"))),
    }
}

/// Runs the Simplex loop for `horizon` seconds from the full state `x0`.
///
/// With the shield on, the decision module picks between `ac` and `bc`
/// every period, starting with `ac`. With it off, `ac` always acts and the
/// forward condition is only logged. A run stops at the first substep that
/// enters the unsafe set.
pub fn simulate_run(
    sys: &DynSystem,
    art: &SwitchingArtifact,
    ac: &mut dyn Controller,
    bc: &mut dyn Controller,
    x0: &[f64],
    opts: &SimOptions,
) -> Result<RunRecord, RuntimeError> {
    art.check_model(sys)?;
    let k = sys.states().len();
    if x0.len() != k {
        return Err(RuntimeError::StateArity { expected: k, got: x0.len() });
    }
    if !(opts.horizon >= 0.0 && opts.horizon.is_finite()) {
        return Err(RuntimeError::BadController(format!("invalid horizon {}", opts.horizon)));
    }
    let mut mon = Monitor::with_m(art, opts.m.unwrap_or(art.m))?;
    let h0 = mon.h(x0);
    if opts.shield && !(h0 > 0.0) {
        return Err(RuntimeError::NotRecoverable { h: h0 });
    }
    let eta = art.eta;
    let periods = (opts.horizon / eta).round() as usize;
    let mut rec = RunRecord {
        states: sys.states().to_vec(),
        inputs: sys.inputs().to_vec(),
        eta,
        shield: opts.shield,
        rows: Vec::with_capacity(periods + 1),
        events: Vec::new(),
        violation: None,
        min_margin: sys.safety_margin(x0),
        final_state: x0.to_vec(),
    };
    if rec.min_margin < 0.0 {
        return Err(RuntimeError::StartsUnsafe);
    }

    let mut x = x0.to_vec();
    let mut mode = Mode::Nc;
    let mut held: Option<Vec<f64>> = None;
    for step in 0..periods {
        let t = step as f64 * eta;
        let h = mon.h(&x);
        let mut events = Vec::new();
        let u_ac = match ac.act(t, &x)? {
            Response::Action { u, clamped } => {
                if clamped {
                    events.push(EventKind::Clamp);
                }
                Some(u)
            }
            Response::Timeout => {
                events.push(EventKind::Timeout);
                None
            }
        };
        let (u_bc, _) = expect_action(bc.act(t, &x)?, "baseline controller")?;

        let (mut fsc, mut rsc) = (None, None);
        let next = if opts.shield {
            match (&u_ac, mode) {
                // a missing action counts as a forward trigger
                (None, _) => Mode::Bc,
                (Some(u), c) => {
                    let (n, f, r) = mon.dm_step(&x, u, &u_bc, c)?;
                    (fsc, rsc) = (f, r);
                    n
                }
            }
        } else {
            if let Some(u) = &u_ac {
                fsc = Some(mon.fsc(&x, u)?);
            }
            Mode::Nc
        };
        if next != mode {
            let kind = if next == Mode::Bc { EventKind::Forward } else { EventKind::Reverse };
            events.push(kind);
            rec.events.push(Event { step, t, kind });
            mode = next;
        }
        if events.contains(&EventKind::Timeout) {
            rec.events.push(Event { step, t, kind: EventKind::Timeout });
        }
        if events.contains(&EventKind::Clamp) {
            rec.events.push(Event { step, t, kind: EventKind::Clamp });
        }
        let u = match (mode, u_ac) {
            (Mode::Bc, _) => u_bc,
            (Mode::Nc, Some(u)) => u,
            (Mode::Nc, None) => held.clone().unwrap_or(u_bc),
        };

        let mut hit = None;
        let mut min_margin = rec.min_margin;
        let (x_next, _) = integrate_period_observed(sys, &x, &u, eta, opts.substeps, |j, s| {
            let g = sys.safety_margin(s);
            min_margin = min_margin.min(g);
            if g < 0.0 {
                hit = Some(j);
                return false;
            }
            true
        })
        .map_err(|e| match e {
            RuntimeError::BlowUp { substep } => RuntimeError::NumericalBlowUp { t: t + substep as f64 * eta / opts.substeps as f64 },
            e => e,
        })?;
        rec.min_margin = min_margin;
        rec.rows.push(Row { t, x: x.clone(), u: u.clone(), mode, h, fsc, rsc, events });
        held = Some(u.clone());
        x = x_next;
        if let Some(j) = hit {
            let tv = t + j as f64 * eta / opts.substeps as f64;
            rec.events.push(Event { step: step + 1, t: tv, kind: EventKind::Violation });
            rec.violation = Some(Violation { t: tv, step: step + 1, x: x.clone() });
            let h = mon.h(&x);
            rec.rows.push(Row { t: tv, x: x.clone(), u, mode, h, fsc: None, rsc: None, events: vec![EventKind::Violation] });
            rec.final_state = x;
            return Ok(rec);
        }
    }
    let h = mon.h(&x);
    let u = rec.rows.last().map(|r| r.u.clone()).unwrap_or_else(|| vec![0.0; sys.inputs().len()]);
    rec.rows.push(Row { t: periods as f64 * eta, x: x.clone(), u, mode, h, fsc: None, rsc: None, events: vec![EventKind::End] });
    rec.final_state = x;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::BarrierCertificate;
    use crate::runtime::ControllerSpec;
    use crate::switchgen::{derive_artifact, DeriveOptions};

    fn setup(h: &str) -> (DynSystem, SwitchingArtifact) {
        let sys = crate::model::builtin("line", &[]).unwrap();
        let bc = BarrierCertificate::new(sys.state_poly(h).unwrap(), 1.0, "").unwrap();
        let opts = DeriveOptions { order: 1, m: 3, force: true, ..DeriveOptions::default() };
        let art = derive_artifact(&sys, &bc, &opts).unwrap().0;
        (sys, art)
    }

    fn run(sys: &DynSystem, art: &SwitchingArtifact, shield: bool, horizon: f64) -> RunRecord {
        let mut ac = ControllerSpec::Constant(vec![1.0]).build(sys).unwrap();
        let mut bc = ControllerSpec::Baseline.build(sys).unwrap();
        simulate_run(sys, art, &mut ac, &mut bc, &[0.0], &SimOptions { horizon, shield, ..SimOptions::default() }).unwrap()
    }

    #[test]
    fn forward_switch_near_point_nine() {
        let (sys, art) = setup("1 - x^2");
        let r = run(&sys, &art, true, 3.0);
        let k = r.first_forward().unwrap();
        assert!(r.rows[k].x[0] >= 0.9 - 1e-9, "{:?}", r.rows[k].x);
        assert!(r.rows[k - 1].x[0] < 0.9);
        assert!(r.violation.is_none() && r.min_margin >= 0.0);
        let twin = run(&sys, &art, false, 3.0);
        let v = twin.violation.as_ref().unwrap();
        assert!(v.step > k && v.step <= k + 2, "switch {k}, violation {}", v.step);
        assert_eq!(twin.rows[..k], r.rows[..k]);
    }

    #[test]
    fn reverse_switch_below_threshold() {
        let (sys, art) = setup("1 - x");
        let r = run(&sys, &art, true, 5.0);
        let gaps = r.forward_reverse_gaps();
        assert!(!gaps.is_empty());
        let rev = r.events.iter().find(|e| e.kind == EventKind::Reverse).unwrap();
        let x = r.rows[rev.step].x[0];
        assert!(x <= 1.0 / 1.3 && r.rows[rev.step - 1].x[0] > 1.0 / 1.3, "{x}");
        assert!(r.violation.is_none());
    }

    #[test]
    fn refuses_unrecoverable_start() {
        let (sys, art) = setup("1 - x");
        let mut ac = ControllerSpec::Constant(vec![1.0]).build(&sys).unwrap();
        let mut bc = ControllerSpec::Baseline.build(&sys).unwrap();
        let r = simulate_run(&sys, &art, &mut ac, &mut bc, &[1.0], &SimOptions::default());
        assert!(matches!(r, Err(RuntimeError::NotRecoverable { .. })));
        let other = crate::model::builtin("m1", &[]).unwrap();
        let r = simulate_run(&other, &art, &mut ac, &mut bc, &[0.48, 0.1], &SimOptions::default());
        assert!(matches!(r, Err(RuntimeError::Switchgen(_))));
    }

    #[test]
    fn csv_layout() {
        let (sys, art) = setup("1 - x");
        let r = run(&sys, &art, true, 1.5);
        let text = r.csv_string();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,u,controller,h,alpha,beta,fsc,rsc,event"));
        assert_eq!(text.lines().count(), r.rows.len() + 1);
        assert!(text.contains(",forward") && text.lines().last().unwrap().ends_with(",end"));
        assert_eq!(run(&sys, &art, true, 1.5).csv_string(), text);
    }
}
