use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::HarnessError;
use crate::model::DynSystem;
use crate::poly::IntervalBox;
use crate::runtime::{integrate_period_observed, Controller, ControllerSpec, Response, RuntimeError};

#[derive(Debug, Clone, Copy)]
pub struct FalsifyOptions {
    pub budget: usize,
    pub seed: u64,
    pub horizon: f64,
    pub substeps: usize,
}

impl Default for FalsifyOptions {
    fn default() -> Self {
        Self { budget: 1000, seed: 0, horizon: 10.0, substeps: crate::runtime::DEFAULT_SUBSTEPS }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    /// initial values of the base states
    pub x0: Vec<f64>,
    pub t_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalsifyReport {
    pub witness: Option<Witness>,
    pub evaluations: usize,
    /// smallest safety margin reached by any rollout
    pub best_margin: f64,
}

/// Unshielded rollout: smallest safety margin over all substeps, and the
/// violation time if the margin went negative.
pub fn rollout(sys: &DynSystem, ac: &mut dyn Controller, x0: &[f64], horizon: f64, substeps: usize) -> Result<(f64, Option<f64>), RuntimeError> {
    let eta = sys.eta();
    let periods = (horizon / eta).round() as usize;
    let mut x = x0.to_vec();
    let mut margin = sys.safety_margin(&x);
    if margin < 0.0 {
        return Ok((margin, Some(0.0)));
    }
    for k in 0..periods {
        let t = k as f64 * eta;
        let u = match ac.act(t, &x)? {
            Response::Action { u, .. } => u,
            Response::Timeout => return Err(RuntimeError::BadController("controller timed out".into())),
        };
        let mut hit = None;
        let (next, _) = integrate_period_observed(sys, &x, &u, eta, substeps, |j, s| {
            let g = sys.safety_margin(s);
            margin = margin.min(g);
            if g < 0.0 {
                hit = Some(t + j as f64 * eta / substeps as f64);
            }
            hit.is_none()
        })?;
        if hit.is_some() {
            return Ok((margin, hit));
        }
        x = next;
    }
    Ok((margin, None))
}

fn sample(rng: &mut ChaCha8Rng, b: &IntervalBox) -> Vec<f64> {
    b.bounds().iter().map(|i| if i.lo < i.hi { rng.gen_range(i.lo..=i.hi) } else { i.lo }).collect()
}

/// Searches the model's initial box for a start from which `ac`, acting
/// alone, reaches the unsafe set. Half of the budget goes to uniform random
/// starts and the rest to a coordinate hill-climb on the safety margin from
/// the best start found. Each rollout counts as one evaluation.
pub fn falsify_controller(sys: &DynSystem, ac: &ControllerSpec, opts: &FalsifyOptions) -> Result<FalsifyReport, HarnessError> {
    let mut report = FalsifyReport { witness: None, evaluations: 0, best_margin: f64::INFINITY };
    if opts.budget == 0 {
        return Ok(report);
    }
    ac.build(sys)?;
    let init = sys.init().clone();
    let eval = |base: &Vec<f64>| -> Result<(f64, Option<f64>), HarnessError> {
        let mut c = ac.build(sys)?;
        Ok(rollout(sys, &mut c, &sys.complete_state(base), opts.horizon, opts.substeps)?)
    };
    // evaluates a batch in parallel; the first witness in batch order wins
    let batch = |cands: Vec<Vec<f64>>, report: &mut FalsifyReport| -> Result<Option<(Vec<f64>, f64)>, HarnessError> {
        let results: Vec<(f64, Option<f64>)> = cands.par_iter().map(eval).collect::<Result<_, _>>()?;
        let mut best: Option<(Vec<f64>, f64)> = None;
        for (c, (m, v)) in cands.into_iter().zip(results) {
            report.evaluations += 1;
            if let Some(t) = v {
                report.best_margin = report.best_margin.min(m);
                report.witness = Some(Witness { x0: c, t_violation: t });
                return Ok(None);
            }
            if best.as_ref().is_none_or(|b| m < b.1) {
                best = Some((c, m));
            }
            report.best_margin = report.best_margin.min(m);
        }
        Ok(best)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let random = opts.budget.div_ceil(2);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut done = 0;
    while done < random {
        let n = (random - done).min(64);
        let cands: Vec<Vec<f64>> = (0..n).map(|_| sample(&mut rng, &init)).collect();
        done += n;
        match batch(cands, &mut report)? {
            None if report.witness.is_some() => return Ok(report),
            Some(b) if best.as_ref().is_none_or(|x| b.1 < x.1) => best = Some(b),
            _ => {}
        }
    }

    let widths: Vec<f64> = init.bounds().iter().map(|b| b.width()).collect();
    let mut step = 0.25;
    let Some((mut at, mut margin)) = best else { return Ok(report) };
    while report.evaluations < opts.budget {
        let mut cands = Vec::new();
        for i in 0..at.len() {
            for s in [-1.0, 1.0] {
                let mut c = at.clone();
                let b = init.bounds()[i];
                c[i] = (c[i] + s * step * widths[i]).clamp(b.lo, b.hi);
                if c != at {
                    cands.push(c);
                }
            }
        }
        cands.truncate(opts.budget - report.evaluations);
        if cands.is_empty() {
            cands.push(sample(&mut rng, &init));
        }
        match batch(cands, &mut report)? {
            None if report.witness.is_some() => return Ok(report),
            Some((c, m)) if m < margin => (at, margin) = (c, m),
            _ => {
                step *= 0.5;
                if step < 1e-4 {
                    // restart from a fresh random point
                    step = 0.25;
                    at = sample(&mut rng, &init);
                    margin = f64::INFINITY;
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_budget() {
        let sys = crate::model::builtin("line", &[]).unwrap();
        let r = falsify_controller(&sys, &ControllerSpec::Constant(vec![1.0]), &FalsifyOptions { budget: 0, ..Default::default() }).unwrap();
        assert_eq!((r.witness, r.evaluations), (None, 0));
    }

    #[test]
    fn line_pushed_right_is_falsified() {
        let sys = crate::model::builtin("line", &[]).unwrap();
        let opts = FalsifyOptions { budget: 10, horizon: 3.0, ..Default::default() };
        let r = falsify_controller(&sys, &ControllerSpec::Constant(vec![1.0]), &opts).unwrap();
        let w = r.witness.unwrap();
        assert_eq!(r.evaluations, 1);
        assert!((w.t_violation - (1.0 - w.x0[0])).abs() < 0.1 / 8.0 + 1e-12, "{w:?}");
        let safe = falsify_controller(&sys, &ControllerSpec::Baseline, &opts).unwrap();
        assert!(safe.witness.is_none() && safe.evaluations == 10);
    }
}
