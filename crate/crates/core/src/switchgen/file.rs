use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SwitchgenError, SwitchingArtifact};
use crate::expr::parse_polynomial;
use crate::poly::{vars, Interval, IntervalBox, Polynomial, Vars};

#[derive(Serialize, Deserialize)]
struct Meta {
    n: usize,
    eta: f64,
    m: u32,
    strategy: String,
    model_hash: String,
    depth: u32,
    states: Vec<String>,
    inputs: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Bound {
    var: String,
    lo: f64,
    hi: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArtifactFile {
    meta: Meta,
    h: String,
    lie: Vec<String>,
    lambda_global: f64,
    mu_dec_global: Vec<f64>,
    mu_inc_global: Vec<f64>,
    admissible: Vec<Bound>,
    #[serde(rename = "unsafe")]
    unsafe_set: Vec<String>,
    gamma: f64,
    controls: Vec<Bound>,
    dynamics: Vec<String>,
    baseline: Option<Vec<String>>,
}

fn bounds(b: &IntervalBox) -> Vec<Bound> {
    b.vars().iter().zip(b.bounds()).map(|(v, i)| Bound { var: v.clone(), lo: i.lo, hi: i.hi }).collect()
}

fn texts(ps: &[Polynomial]) -> Vec<String> {
    ps.iter().map(ToString::to_string).collect()
}

fn bad(msg: impl Into<String>) -> SwitchgenError {
    SwitchgenError::Format(msg.into())
}

fn read_box(bs: &[Bound], names: &[String], what: &str) -> Result<IntervalBox, SwitchgenError> {
    if bs.len() != names.len() || bs.iter().zip(names).any(|(b, n)| &b.var != n) {
        return Err(bad(format!("`{what}` does not list the declared variables in order")));
    }
    let iv = bs.iter().map(|b| Interval::new(b.lo, b.hi)).collect::<Result<Vec<_>, _>>()?;
    Ok(IntervalBox::new(vars(names), iv)?)
}

fn read_polys(ts: &[String], space: &Vars) -> Result<Vec<Polynomial>, SwitchgenError> {
    ts.iter().map(|t| Ok(parse_polynomial(t, space)?)).collect()
}

fn finite(x: f64, what: &str) -> Result<f64, SwitchgenError> {
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(bad(format!("`{what}` must be a finite non-negative number")))
    }
}

impl SwitchingArtifact {
    /// Deterministic JSON text.
    pub fn to_json(&self) -> String {
        let file = ArtifactFile {
            meta: Meta {
                n: self.order,
                eta: self.eta,
                m: self.m,
                strategy: self.strategy.to_string(),
                model_hash: self.model_hash.clone(),
                depth: self.depth,
                states: self.states.clone(),
                inputs: self.inputs.clone(),
            },
            h: self.chain[0].to_string(),
            lie: texts(&self.chain[1..]),
            lambda_global: self.lambda_global,
            mu_dec_global: self.mu_dec_global.clone(),
            mu_inc_global: self.mu_inc_global.clone(),
            admissible: bounds(&self.admissible),
            unsafe_set: texts(&self.unsafe_set),
            gamma: self.gamma,
            controls: bounds(&self.controls),
            dynamics: texts(&self.dynamics),
            baseline: self.baseline.as_deref().map(texts),
        };
        crate::json::to_string(&file)
    }

    pub fn from_json(text: &str) -> Result<Self, SwitchgenError> {
        let f: ArtifactFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let meta = f.meta;
        if meta.n < 1 {
            return Err(SwitchgenError::InvalidOrder);
        }
        if meta.m < 2 {
            return Err(SwitchgenError::InvalidMultiplier(meta.m));
        }
        if !(meta.eta > 0.0 && meta.eta.is_finite()) {
            return Err(bad("`eta` must be positive"));
        }
        let strategy = meta.strategy.parse().map_err(bad)?;
        let k = meta.states.len();
        let state_space = vars(&meta.states);
        let space = vars(&meta.states.iter().chain(&meta.inputs).collect::<Vec<_>>());

        if f.lie.len() != meta.n + 1 {
            return Err(bad(format!("`lie` must hold {} derivatives, found {}", meta.n + 1, f.lie.len())));
        }
        let mut chain = vec![parse_polynomial(&f.h, &space)?];
        chain.extend(read_polys(&f.lie, &space)?);
        let dynamics = read_polys(&f.dynamics, &space)?;
        if dynamics.len() != k || f.mu_dec_global.len() != k || f.mu_inc_global.len() != k {
            return Err(bad("`dynamics` and the mu vectors need one entry per state"));
        }
        let baseline = match &f.baseline {
            Some(b) if b.len() != meta.inputs.len() => return Err(bad("`baseline` needs one law per input")),
            Some(b) => Some(read_polys(b, &state_space)?),
            None => None,
        };
        for (i, w) in f.mu_dec_global.iter().chain(&f.mu_inc_global).enumerate() {
            finite(*w, if i < k { "mu_dec_global" } else { "mu_inc_global" })?;
        }
        if !(f.gamma > 0.0 && f.gamma.is_finite()) {
            return Err(bad("`gamma` must be positive"));
        }
        Ok(SwitchingArtifact {
            order: meta.n,
            eta: meta.eta,
            m: meta.m,
            strategy,
            model_hash: meta.model_hash,
            depth: meta.depth,
            chain,
            lambda_global: finite(f.lambda_global, "lambda_global")?,
            mu_dec_global: f.mu_dec_global,
            mu_inc_global: f.mu_inc_global,
            admissible: read_box(&f.admissible, &meta.states, "admissible")?,
            controls: read_box(&f.controls, &meta.inputs, "controls")?,
            unsafe_set: read_polys(&f.unsafe_set, &state_space)?,
            gamma: f.gamma,
            dynamics,
            baseline,
            states: meta.states,
            inputs: meta.inputs,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), SwitchgenError> {
        std::fs::write(path, self.to_json()).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, SwitchgenError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the JSON text.
    pub fn file_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}
