use std::path::Path;

use super::{read, DynSystem, ModelError};
use crate::expr::{parse_system, recast, ExprError, SystemDecl};

const M1: &str = include_str!("../../models/m1.model");
const M2: &str = include_str!("../../models/m2.model");
const PENDULUM: &str = include_str!("../../models/pendulum.model");
const LINE: &str = include_str!("../../models/line.model");

/// Constant action of the deliberately unsafe advanced controller on M1: it
/// drives the voltage up at 0.035 per second, leaving the safety band after
/// roughly 130 control periods from the reference.
pub const M1_UNSAFE_ACTION: f64 = 0.00875;

const TABLE: [(&str, &str, Option<&str>); 4] = [
    ("M1", M1, Some("(band*vref)^2 - (v - vref)^2")),
    ("M2", M2, None),
    ("pendulum", PENDULUM, None),
    ("line", LINE, Some("1 - x")),
];

pub fn builtin_names() -> Vec<&'static str> {
    TABLE.iter().map(|(n, _, _)| *n).collect()
}

fn lookup(name: &str) -> Result<&'static (&'static str, &'static str, Option<&'static str>), ModelError> {
    TABLE
        .iter()
        .find(|(n, _, _)| n.eq_ignore_ascii_case(name))
        .ok_or_else(|| ModelError::UnknownModel(name.to_string(), builtin_names().join(", ")))
}

/// A builtin model with parameter overrides applied.
///
/// * `M1`: grid-connected single inverter, linear dynamics.
/// * `M2`: islanded pair of inverters, trig terms recast to auxiliary states.
/// * `pendulum`: damped pendulum, one recast pair.
/// * `line`: the single integrator `dx/dt = u` with unsafe set `x > 1`.
pub fn builtin(name: &str, overrides: &[(String, f64)]) -> Result<DynSystem, ModelError> {
    let (id, text, _) = lookup(name)?;
    Ok(load_str(text, overrides)?.with_name(*id))
}

/// Certificate expression shipped with a builtin model, over its states and
/// parameters.
pub fn builtin_certificate(name: &str) -> Option<&'static str> {
    lookup(name).ok().and_then(|(_, _, h)| *h)
}

/// Parses and recasts model text. An `eta` override applies even when the
/// model does not declare `eta`.
pub fn load_str(text: &str, overrides: &[(String, f64)]) -> Result<DynSystem, ModelError> {
    let decl = parse_system(text)?;
    let (declared, extra): (Vec<_>, Vec<_>) =
        overrides.iter().cloned().partition(|(n, _)| decl.params.iter().any(|(p, _)| p == n));
    let mut eta = None;
    for (n, v) in extra {
        if n == "eta" {
            eta = Some(v);
        } else {
            return Err(ExprError::UnknownParameter(n).into());
        }
    }
    for (n, v) in overrides {
        if !v.is_finite() {
            return Err(ModelError::Invalid(format!("override {n} = {v} is not finite")));
        }
    }
    let decl: SystemDecl = decl.with_overrides(&declared)?;
    let sys = recast(&decl)?;
    match eta {
        Some(e) => sys.with_eta(e),
        None => Ok(sys),
    }
}

/// Loads a model file; the system is named after the file stem.
pub fn load(path: &Path, overrides: &[(String, f64)]) -> Result<DynSystem, ModelError> {
    let text = read(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(load_str(&text, overrides)?.with_name(name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;

    #[test]
    fn m1_band_edges() {
        let m = builtin("M1", &[]).unwrap();
        assert_eq!(m.eta(), 0.0032);
        let g = &m.unsafe_set()[0];
        for edge in [0.4656, 0.4944] {
            assert!(g.eval(&[edge, 0.1]).unwrap().abs() < 1e-15);
        }
        assert!(!m.is_unsafe(&[0.48, 0.1]));
        assert!(m.is_unsafe(&[0.4945, 0.1]));
        assert!(m.is_unsafe(&[0.4655, 0.1]));
    }

    #[test]
    fn m1_equilibrium_under_droop() {
        let m = builtin("M1", &[]).unwrap();
        let x = [0.48, 0.1];
        let u = m.baseline_action(&x).unwrap();
        assert!(u[0].abs() < 1e-15);
        let mut f = [1.0; 2];
        m.eval_field(&[x[0], x[1], u[0]], &mut f);
        assert!(f.iter().all(|d| d.abs() < 1e-15), "{f:?}");
    }

    #[test]
    fn overrides_apply() {
        let m = builtin("m1", &[("eta".into(), 0.0032)]).unwrap();
        assert_eq!(m.eta(), 0.0032);
        let m = builtin("M1", &[("kv".into(), 2.0)]).unwrap();
        let sp = m.space().clone();
        assert_eq!(m.dynamics()[0], Polynomial::var(sp, "u").unwrap().scale(2.0));
        assert!(matches!(builtin("M1", &[("nope".into(), 1.0)]), Err(ModelError::Expr(ExprError::UnknownParameter(_)))));
        assert!(matches!(builtin("M9", &[]), Err(ModelError::UnknownModel(..))));
    }

    #[test]
    fn m2_is_polynomial_after_recast() {
        let m = builtin("M2", &[]).unwrap();
        assert_eq!(m.aux().len(), 1);
        assert_eq!(m.states().len(), 8);
        // equilibrium: all derivatives vanish under the baseline
        let x = m.complete_state(&[0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let u = m.baseline_action(&x).unwrap();
        let mut p = x.clone();
        p.extend(&u);
        let mut f = vec![0.0; 8];
        m.eval_field(&p, &mut f);
        assert!(f.iter().all(|d| d.abs() < 1e-12), "{f:?}");
    }

    #[test]
    fn printed_models_load_back_equal() {
        for name in builtin_names() {
            let m = builtin(name, &[]).unwrap();
            let again = load_str(&m.to_model_text(), &[]).unwrap();
            assert_eq!(m, again, "{name}");
            assert_eq!(m.hash(), again.hash());
        }
    }

    #[test]
    fn builtin_certificates_lower() {
        let m = builtin("M1", &[]).unwrap();
        let h = m.state_poly(builtin_certificate("M1").unwrap()).unwrap();
        assert_eq!(&h, &m.unsafe_set()[0]);
        assert!(builtin_certificate("M2").is_none());
    }

    #[test]
    fn inverted_bounds_rejected() {
        let bad = LINE.replace("x in [-2, 2]", "x in [2, -2]");
        assert!(load_str(&bad, &[]).is_err());
    }
}
