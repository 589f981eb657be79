use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{run_convergence, stat, Stat, DEFAULT_EPSILON};
use super::HarnessError;
use crate::certify::BarrierCertificate;
use crate::model::{self, DynSystem};
use crate::poly::{Interval, IntervalBox};
use crate::runtime::{simulate_run, ControllerSpec, RunRecord, SimOptions, DEFAULT_HORIZON, DEFAULT_SUBSTEPS};
use crate::switchgen::{derive_artifact, DeriveOptions, SwitchingArtifact};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitBound {
    pub var: String,
    pub lo: f64,
    pub hi: f64,
}

fn default_runs() -> usize {
    100
}
fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}
fn default_true() -> bool {
    true
}
fn default_substeps() -> usize {
    DEFAULT_SUBSTEPS
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_bc() -> String {
    "baseline".into()
}

/// Experiment description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// builtin model name or model file path
    pub model: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// artifact file; derived from the model's builtin certificate if absent
    #[serde(default)]
    pub artifact: Option<String>,
    pub ac: String,
    #[serde(default = "default_bc")]
    pub bc: String,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// overrides the model's initial box for the listed base states
    #[serde(default)]
    pub init: Vec<InitBound>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_true")]
    pub shield: bool,
    /// also run the opposite shield setting from the same initial states
    #[serde(default = "default_true")]
    pub twins: bool,
    #[serde(default)]
    pub m: Option<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl ExperimentSpec {
    pub fn new(model: impl Into<String>, ac: impl Into<String>) -> Self {
        serde_json::from_value(serde_json::json!({"model": model.into(), "ac": ac.into()})).expect("defaults are valid")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Spec(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn overrides(&self) -> Vec<(String, f64)> {
        self.params.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    /// Loads the model and artifact; relative paths are taken from `base`.
    pub fn resolve(&self, base: &Path) -> Result<(DynSystem, SwitchingArtifact), HarnessError> {
        let rel = |p: &str| -> PathBuf {
            let p = PathBuf::from(p);
            if p.is_absolute() { p } else { base.join(p) }
        };
        let builtin = model::builtin_names().iter().any(|n| n.eq_ignore_ascii_case(&self.model));
        let sys = if builtin { model::builtin(&self.model, &self.overrides())? } else { model::load(&rel(&self.model), &self.overrides())? };
        let art = match &self.artifact {
            Some(p) => SwitchingArtifact::read(&rel(p))?,
            None => {
                let text = model::builtin_certificate(&self.model)
                    .ok_or_else(|| HarnessError::Spec(format!("model `{}` has no builtin certificate; give an artifact", self.model)))?;
                let bc = BarrierCertificate::new(sys.state_poly(text)?, 1.0, "builtin")?;
                let opts = DeriveOptions { m: self.m.unwrap_or(crate::switchgen::DEFAULT_M), ..DeriveOptions::default() };
                derive_artifact(&sys, &bc, &opts)?.0
            }
        };
        art.check_model(&sys)?;
        Ok((sys, art))
    }

    fn init_box(&self, sys: &DynSystem) -> Result<IntervalBox, HarnessError> {
        let mut b = sys.init().bounds().to_vec();
        for ib in &self.init {
            let i = sys
                .init()
                .vars()
                .iter()
                .position(|v| *v == ib.var)
                .ok_or_else(|| HarnessError::Spec(format!("`init` names unknown state `{}`", ib.var)))?;
            b[i] = Interval::new(ib.lo, ib.hi)?;
        }
        Ok(IntervalBox::new(sys.init().vars().clone(), b)?)
    }
}

/// Initial full states for `runs` runs, drawn uniformly from `init`.
pub fn sample_initial_states(sys: &DynSystem, init: &IntervalBox, runs: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..runs)
        .map(|_| {
            let base: Vec<f64> = init.bounds().iter().map(|b| if b.lo < b.hi { rng.gen_range(b.lo..=b.hi) } else { b.lo }).collect();
            sys.complete_state(&base)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunPair {
    pub index: usize,
    pub x0: Vec<f64>,
    pub shielded: Option<RunRecord>,
    pub unshielded: Option<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub runs: usize,
    pub shield: bool,
    pub m: u32,
    pub shielded_violations: Option<usize>,
    pub unshielded_violations: Option<usize>,
    pub monitored: Option<String>,
    pub reference: Option<f64>,
    pub epsilon: f64,
    /// convergence rate in percent
    pub cr: Option<f64>,
    /// band entry time, converged runs only
    pub ct: Option<Stat>,
    pub settled: Option<Stat>,
    pub delta: Option<Stat>,
    /// periods until the first forward switch
    pub steps_to_forward: Option<Stat>,
    pub forward_to_reverse: Option<Stat>,
    /// unshielded violation period minus shielded forward-switch period
    pub switch_to_violation: Option<Stat>,
    /// monitored output at the first forward switch
    pub output_at_forward: Option<Stat>,
    pub mean_forward_switches: Option<f64>,
    pub timeouts: usize,
    pub clamps: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub pairs: Vec<RunPair>,
    pub summary: MetricsSummary,
}

impl ExperimentResult {
    /// `summary.json` plus one CSV per run, named by index and shield state.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
        let mut written = Vec::new();
        let mut put = |name: String, body: String| -> Result<(), HarnessError> {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())))?;
            written.push(p);
            Ok(())
        };
        put("summary.json".into(), crate::json::to_string(&self.summary))?;
        for p in &self.pairs {
            if let Some(r) = &p.shielded {
                put(format!("run_{:04}_shielded.csv", p.index), r.csv_string())?;
            }
            if let Some(r) = &p.unshielded {
                put(format!("run_{:04}_unshielded.csv", p.index), r.csv_string())?;
            }
        }
        Ok(written)
    }
}

fn one_run(sys: &DynSystem, art: &SwitchingArtifact, spec: &ExperimentSpec, ac: &ControllerSpec, bc: &ControllerSpec, x0: &[f64], shield: bool) -> Result<RunRecord, HarnessError> {
    let mut a = ac.build(sys)?;
    let mut b = bc.build(sys)?;
    let opts = SimOptions { horizon: spec.horizon, substeps: spec.substeps, shield, m: spec.m };
    Ok(simulate_run(sys, art, &mut a, &mut b, x0, &opts)?)
}

/// Runs every initial state (and its twin) in parallel; results are merged
/// in index order.
pub fn run_experiment(spec: &ExperimentSpec, sys: &DynSystem, art: &SwitchingArtifact) -> Result<ExperimentResult, HarnessError> {
    art.check_model(sys)?;
    let ac: ControllerSpec = spec.ac.parse().map_err(HarnessError::Spec)?;
    let bc: ControllerSpec = spec.bc.parse().map_err(HarnessError::Spec)?;
    let init = spec.init_box(sys)?;
    let starts = sample_initial_states(sys, &init, spec.runs, spec.seed);
    let pairs: Vec<RunPair> = starts
        .into_par_iter()
        .enumerate()
        .map(|(index, x0)| -> Result<RunPair, HarnessError> {
            let run = |shield: bool| -> Result<Option<RunRecord>, HarnessError> {
                if shield == spec.shield || spec.twins {
                    one_run(sys, art, spec, &ac, &bc, &x0, shield).map(Some)
                } else {
                    Ok(None)
                }
            };
            Ok(RunPair { index, shielded: run(true)?, unshielded: run(false)?, x0 })
        })
        .collect::<Result<_, _>>()?;
    let summary = summarize(spec, sys, art, &pairs);
    Ok(ExperimentResult { pairs, summary })
}

fn summarize(spec: &ExperimentSpec, sys: &DynSystem, art: &SwitchingArtifact, pairs: &[RunPair]) -> MetricsSummary {
    let primary = |p: &RunPair| if spec.shield { p.shielded.clone() } else { p.unshielded.clone() };
    let viol = |f: fn(&RunPair) -> &Option<RunRecord>| -> Option<usize> {
        let rs: Vec<&RunRecord> = pairs.iter().filter_map(|p| f(p).as_ref()).collect();
        (!rs.is_empty()).then(|| rs.iter().filter(|r| r.violation.is_some()).count())
    };
    let monitored = sys.reference().first().and_then(|(n, r)| Some((n.clone(), sys.state_index(n)?, *r)));

    let mut ct = Vec::new();
    let mut settled = Vec::new();
    let mut delta = Vec::new();
    let mut converged = 0usize;
    let mut to_forward = Vec::new();
    let mut f2r = Vec::new();
    let mut s2v = Vec::new();
    let mut at_forward = Vec::new();
    let mut forwards = Vec::new();
    let (mut timeouts, mut clamps) = (0, 0);
    for p in pairs {
        let Some(r) = primary(p) else { continue };
        if let Some((_, i, reference)) = &monitored {
            if let Some(c) = run_convergence(&r, *i, *reference, spec.epsilon) {
                converged += 1;
                ct.push(c.entry);
                settled.push(c.settled);
                delta.push(c.delta);
            }
        }
        timeouts += r.count(crate::runtime::EventKind::Timeout);
        clamps += r.count(crate::runtime::EventKind::Clamp);
        if let Some(s) = &p.shielded {
            forwards.push(s.forward_count() as f64);
            if let Some(k) = s.first_forward() {
                to_forward.push(k as f64);
                if let Some((_, i, _)) = &monitored {
                    at_forward.push(s.rows[k].x[*i]);
                }
                if let Some(v) = p.unshielded.as_ref().and_then(|u| u.violation.as_ref()) {
                    s2v.push(v.step as f64 - k as f64);
                }
            }
            f2r.extend(s.forward_reverse_gaps().into_iter().map(|g| g as f64));
        }
    }
    let n = pairs.iter().filter(|p| primary(p).is_some()).count();
    MetricsSummary {
        runs: pairs.len(),
        shield: spec.shield,
        m: spec.m.unwrap_or(art.m),
        shielded_violations: viol(|p| &p.shielded),
        unshielded_violations: viol(|p| &p.unshielded),
        monitored: monitored.as_ref().map(|m| m.0.clone()),
        reference: monitored.as_ref().map(|m| m.2),
        epsilon: spec.epsilon,
        cr: (monitored.is_some() && n > 0).then(|| 100.0 * converged as f64 / n as f64),
        ct: stat(&ct),
        settled: stat(&settled),
        delta: stat(&delta),
        steps_to_forward: stat(&to_forward),
        forward_to_reverse: stat(&f2r),
        switch_to_violation: stat(&s2v),
        output_at_forward: stat(&at_forward),
        mean_forward_switches: stat(&forwards).map(|s| s.mean),
        timeouts,
        clamps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_defaults_and_unknown_fields() {
        let s = ExperimentSpec::new("m1", "constant:0.00875");
        assert_eq!((s.runs, s.horizon, s.shield, s.twins, s.substeps, s.seed), (100, 10.0, true, true, 8, 0));
        assert!(ExperimentSpec::from_json("{\"model\":\"m1\",\"ac\":\"baseline\",\"bogus\":1}").is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let sys = crate::model::builtin("m1", &[]).unwrap();
        let a = sample_initial_states(&sys, sys.init(), 5, 7);
        assert_eq!(a, sample_initial_states(&sys, sys.init(), 5, 7));
        assert_ne!(a, sample_initial_states(&sys, sys.init(), 5, 8));
        assert!(a.iter().all(|x| sys.init().contains(x)));
    }

    #[test]
    fn baseline_only_converges() {
        let sys = crate::model::builtin("m1", &[]).unwrap();
        let spec = ExperimentSpec { runs: 4, horizon: 2.0, twins: false, ..ExperimentSpec::new("m1", "baseline") };
        let (s, art) = spec.resolve(Path::new(".")).unwrap();
        assert_eq!(s, sys);
        let r = run_experiment(&spec, &sys, &art).unwrap();
        assert_eq!(r.summary.cr, Some(100.0));
        assert_eq!(r.summary.shielded_violations, Some(0));
        assert_eq!(r.summary.unshielded_violations, None);
        assert!(r.summary.ct.is_some());
    }
}
