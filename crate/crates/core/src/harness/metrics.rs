use serde::Serialize;

use crate::runtime::{Monitor, RunRecord, RuntimeError};

pub const DEFAULT_EPSILON: f64 = 0.001;
pub const DEFAULT_REWARD_WEIGHT: f64 = 100.0;

/// Band entry of one monitored output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    /// first time inside `[r - eps, r + eps]`
    pub entry: f64,
    /// start of the final stretch inside the band
    pub settled: f64,
    /// mean `|y - r|` from entry on
    pub delta: f64,
}

/// `None` unless the trace ends inside the band.
pub fn convergence(times: &[f64], ys: &[f64], reference: f64, eps: f64) -> Option<Convergence> {
    let inside = |y: f64| (y - reference).abs() <= eps;
    let entry = ys.iter().position(|&y| inside(y))?;
    if !inside(*ys.last()?) {
        return None;
    }
    let settled = ys.iter().rposition(|&y| !inside(y)).map_or(0, |i| i + 1);
    let tail = &ys[entry..];
    let delta = tail.iter().map(|y| (y - reference).abs()).sum::<f64>() / tail.len() as f64;
    Some(Convergence { entry: times[entry], settled: times[settled], delta })
}

/// Convergence of a run record on state `index`.
pub fn run_convergence(rec: &RunRecord, index: usize, reference: f64, eps: f64) -> Option<Convergence> {
    if rec.violation.is_some() {
        return None;
    }
    let times: Vec<f64> = rec.rows.iter().map(|r| r.t).collect();
    let ys: Vec<f64> = rec.rows.iter().map(|r| r.x[index]).collect();
    convergence(&times, &ys, reference, eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Mean and population standard deviation; `None` for no samples.
pub fn stat(xs: &[f64]) -> Option<Stat> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some(Stat { mean, std: var.sqrt(), count: xs.len() })
}

/// -1000 when the forward condition fires, +100 inside the band,
/// `-w (y - r)^2` otherwise.
pub fn reward_eval(mon: &mut Monitor<'_>, x: &[f64], u: &[f64], y: f64, reference: f64, eps: f64, w: f64) -> Result<f64, RuntimeError> {
    if mon.fsc(x, u)?.fsc() {
        return Ok(-1000.0);
    }
    let e = y - reference;
    Ok(if e.abs() <= eps { 100.0 } else { -w * e * e })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_at_step_k() {
        let eta = 0.01;
        let k = 7;
        let times: Vec<f64> = (0..20).map(|i| i as f64 * eta).collect();
        let ys: Vec<f64> = (0..20).map(|i| if i < k { 1.0 } else { 0.4805 }).collect();
        let c = convergence(&times, &ys, 0.48, 0.001).unwrap();
        assert_eq!(c.entry, k as f64 * eta);
        assert_eq!(c.settled, k as f64 * eta);
        assert!((c.delta - 0.0005).abs() < 1e-12);
    }

    #[test]
    fn leaving_band_is_not_converged() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert!(convergence(&t, &[0.0, 0.48, 0.48, 0.6], 0.48, 0.001).is_none());
        let c = convergence(&t, &[0.48, 0.6, 0.48, 0.48], 0.48, 0.001).unwrap();
        assert_eq!((c.entry, c.settled), (0.0, 2.0));
    }

    #[test]
    fn stats() {
        let s = stat(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std, s.count), (2.0, 1.0, 2));
        assert!(stat(&[]).is_none());
    }

    #[test]
    fn reward_clauses() {
        use crate::certify::BarrierCertificate;
        use crate::switchgen::{derive_artifact, DeriveOptions};
        let sys = crate::model::builtin("line", &[]).unwrap();
        let bc = BarrierCertificate::new(sys.state_poly("1 - x^2").unwrap(), 1.0, "").unwrap();
        let art = derive_artifact(&sys, &bc, &DeriveOptions { order: 1, force: true, ..DeriveOptions::default() }).unwrap().0;
        let mut mon = Monitor::new(&art);
        assert_eq!(reward_eval(&mut mon, &[0.9], &[1.0], 0.0, 0.0, 0.001, 100.0).unwrap(), -1000.0);
        assert_eq!(reward_eval(&mut mon, &[0.0], &[0.0], 0.48, 0.48, 0.001, 100.0).unwrap(), 100.0);
        let r = reward_eval(&mut mon, &[0.0], &[0.0], 0.49, 0.48, 0.001, 100.0).unwrap();
        assert!((r + 0.01).abs() < 1e-12);
    }
}
