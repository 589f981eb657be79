use std::collections::HashMap;

use super::ast::Expr;
use super::{ExprError, SystemDecl};
use crate::model::{AuxPair, DynSystem, SystemParts};
use crate::poly::{vars, Interval, IntervalBox, Polynomial, Vars};

/// Default control period when a model declares no `eta` parameter.
pub const DEFAULT_ETA: f64 = 0.01;

/// Resolves a `sin`/`cos` node to a polynomial in the target space.
pub(crate) type TrigResolver<'a> = dyn Fn(bool, &Expr) -> Result<Polynomial, ExprError> + 'a;

/// Lowers an expression to a polynomial over `space`. Parameters are
/// substituted from `env`; trig nodes go through `trig`.
pub(crate) fn lower(e: &Expr, space: &Vars, env: &HashMap<&str, f64>, trig: &TrigResolver<'_>) -> Result<Polynomial, ExprError> {
    Ok(match e {
        Expr::Const(c) => Polynomial::constant(space.clone(), *c),
        Expr::Var(name) => match env.get(name.as_str()) {
            Some(v) => Polynomial::constant(space.clone(), *v),
            None => Polynomial::var(space.clone(), name)
                .map_err(|_| ExprError::Validation(format!("`{name}` is not available here")))?,
        },
        Expr::Add(a, b) => &lower(a, space, env, trig)? + &lower(b, space, env, trig)?,
        Expr::Mul(a, b) => &lower(a, space, env, trig)? * &lower(b, space, env, trig)?,
        Expr::Pow(a, k) => lower(a, space, env, trig)?.pow(*k),
        Expr::Neg(a) => -lower(a, space, env, trig)?,
        Expr::Sin(a) => trig(true, a)?,
        Expr::Cos(a) => trig(false, a)?,
    })
}

/// Parses a trig-free polynomial, such as the canonical text written by
/// `Polynomial`'s `Display`, into `space`.
pub fn parse_polynomial(text: &str, space: &Vars) -> Result<Polynomial, ExprError> {
    let e = super::parse_expr(text)?;
    lower(&e, space, &HashMap::new(), &no_trig)
}

fn no_trig(_: bool, a: &Expr) -> Result<Polynomial, ExprError> {
    Err(ExprError::NonPolynomialArgument(a.to_string()))
}

/// Trig argument in normal form: the leading coefficient is positive, and
/// `sign` records whether the original argument was negated.
struct NormalArg {
    poly: Polynomial,
    sign: f64,
}

fn normalize(p: Polynomial) -> NormalArg {
    let lead = p.terms().next_back().map(|(_, c)| c).unwrap_or(0.0);
    if lead < 0.0 {
        NormalArg { poly: -p, sign: -1.0 }
    } else {
        NormalArg { poly: p, sign: 1.0 }
    }
}

fn trig_args_of(decl: &SystemDecl) -> Vec<&Expr> {
    let mut out = Vec::new();
    for (_, e) in decl.dynamics.iter().chain(&decl.baseline) {
        out.extend(e.trig_args());
    }
    for g in &decl.unsafe_set {
        out.extend(g.trig_args());
    }
    out
}

/// Replaces every `sin(a)`/`cos(a)` by auxiliary states `s_a`, `c_a` with
/// `ds_a/dt = c_a * da/dt` and `dc_a/dt = -s_a * da/dt`, producing a purely
/// polynomial system.
///
/// Arguments are deduplicated up to sign (`sin(y - x) = -sin(x - y)`).
/// Pairs declared in a `trig:` section are reused when their argument
/// matches. New pairs are named `sin_x`/`cos_x` when the argument is a single
/// state `x`, and `sin_a1`/`cos_a1`, `sin_a2`/... otherwise. The state order
/// is the declared states followed by the new pairs; inputs come last.
pub fn recast(decl: &SystemDecl) -> Result<DynSystem, ExprError> {
    let params = decl.param_values()?;
    let env: HashMap<&str, f64> = params.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    let eta = env.get("eta").copied().unwrap_or(DEFAULT_ETA);

    // trig arguments are polynomials of the non-auxiliary states
    let base: Vec<String> = decl.states.iter().filter(|s| !decl.is_aux(s)).cloned().collect();
    let base_space = vars(&base);

    let mut pairs: Vec<(AuxPair, bool)> = Vec::new(); // (pair, newly introduced)
    for t in &decl.trig {
        let p = lower(&t.arg, &base_space, &env, &no_trig)
            .map_err(|_| ExprError::NonPolynomialArgument(t.arg.to_string()))?;
        let n = normalize(p);
        if n.sign < 0.0 || n.poly.num_terms() == 0 {
            return Err(ExprError::Validation(format!(
                "declared trig argument `{}` must have a positive leading coefficient",
                t.arg
            )));
        }
        pairs.push((AuxPair { sin: t.sin.clone(), cos: t.cos.clone(), arg: n.poly }, false));
    }

    let taken = |name: &str| {
        decl.states.iter().chain(&decl.inputs).any(|n| n == name) || env.contains_key(name)
    };
    let mut counter = 0usize;
    for a in trig_args_of(decl) {
        let p = lower(a, &base_space, &env, &no_trig).map_err(|_| ExprError::NonPolynomialArgument(a.to_string()))?;
        if p.degree() == 0 {
            continue; // evaluated numerically below
        }
        let n = normalize(p);
        if pairs.iter().any(|(q, _)| q.arg == n.poly) {
            continue;
        }
        let used = n.poly.used_vars();
        let single = n.poly.num_terms() == 1 && used.len() == 1 && n.poly.degree() == 1 && n.poly.terms().next().map(|(_, c)| c) == Some(1.0);
        let (s, c) = if single {
            (format!("sin_{}", used[0]), format!("cos_{}", used[0]))
        } else {
            counter += 1;
            (format!("sin_a{counter}"), format!("cos_a{counter}"))
        };
        for name in [&s, &c] {
            if taken(name) || pairs.iter().any(|(q, _)| &q.sin == name || &q.cos == name) {
                return Err(ExprError::AuxCollision(name.clone()));
            }
        }
        pairs.push((AuxPair { sin: s, cos: c, arg: n.poly }, true));
    }

    let mut state_names: Vec<String> = decl.states.clone();
    for (p, new) in &pairs {
        if *new {
            state_names.push(p.sin.clone());
            state_names.push(p.cos.clone());
        }
    }
    let mut space_names = state_names.clone();
    space_names.extend(decl.inputs.iter().cloned());
    let space = vars(&space_names);
    let state_space = vars(&state_names);

    let resolver = |target: &Vars| {
        let pairs = &pairs;
        let env = &env;
        let base_space = &base_space;
        let target = target.clone();
        move |is_sin: bool, a: &Expr| -> Result<Polynomial, ExprError> {
            let p = lower(a, base_space, env, &no_trig)?;
            if p.degree() == 0 {
                let v = p.constant_term();
                return Ok(Polynomial::constant(target.clone(), if is_sin { v.sin() } else { v.cos() }));
            }
            let n = normalize(p);
            let (pair, _) = pairs
                .iter()
                .find(|(q, _)| q.arg == n.poly)
                .ok_or_else(|| ExprError::NonPolynomialArgument(a.to_string()))?;
            if is_sin {
                Ok(Polynomial::var(target.clone(), &pair.sin)?.scale(n.sign))
            } else {
                Ok(Polynomial::var(target.clone(), &pair.cos)?)
            }
        }
    };

    let full = resolver(&space);
    let mut dynamics: Vec<Polynomial> = Vec::with_capacity(state_names.len());
    for s in &decl.states {
        let (_, e) = decl.dynamics.iter().find(|(n, _)| n == s).ok_or_else(|| ExprError::MissingDerivative(s.clone()))?;
        dynamics.push(lower(e, &space, &env, &full)?);
    }
    // aux dynamics by the chain rule over the recast field
    let field = crate::poly::VectorField::new(
        decl.states.iter().cloned().zip(dynamics.iter().cloned()).collect(),
    );
    for (p, new) in &pairs {
        if !*new {
            continue;
        }
        let arg = p.arg.with_vars(&space)?;
        let adot = arg.lie_derivative(&field);
        let s = Polynomial::var(space.clone(), &p.sin)?;
        let c = Polynomial::var(space.clone(), &p.cos)?;
        dynamics.push(&c * &adot);
        dynamics.push(-(&s * &adot));
    }

    let on_states = resolver(&state_space);
    let unsafe_set = decl
        .unsafe_set
        .iter()
        .map(|g| lower(g, &state_space, &env, &on_states))
        .collect::<Result<Vec<_>, _>>()?;
    let baseline = if decl.baseline.is_empty() {
        None
    } else {
        let mut out = Vec::with_capacity(decl.inputs.len());
        for i in &decl.inputs {
            let (_, e) = decl.baseline.iter().find(|(n, _)| n == i).expect("validated");
            out.push(lower(e, &state_space, &env, &on_states)?);
        }
        Some(out)
    };

    let bounds = |list: &[super::BoundDecl]| -> Result<HashMap<String, Interval>, ExprError> {
        decl.eval_bounds(list)?
            .into_iter()
            .map(|(n, lo, hi)| Ok((n, Interval::new(lo, hi)?)))
            .collect()
    };
    let adm = bounds(&decl.admissible)?;
    let unit = Interval { lo: -1.0, hi: 1.0 };
    let admissible = IntervalBox::new(
        state_space.clone(),
        state_names.iter().map(|n| adm.get(n).copied().unwrap_or(unit)).collect(),
    )?;
    let ctl = bounds(&decl.controls)?;
    let controls = IntervalBox::new(vars(&decl.inputs), decl.inputs.iter().map(|n| ctl[n]).collect())?;
    let ini = bounds(&decl.init)?;
    let init = IntervalBox::new(
        base_space.clone(),
        base.iter().map(|n| ini.get(n).or_else(|| adm.get(n)).copied().expect("validated")).collect(),
    )?;
    let reference = decl
        .reference
        .iter()
        .map(|(n, e)| (n.clone(), e.eval(&env).expect("validated")))
        .collect();

    DynSystem::new(SystemParts {
        name: String::new(),
        states: state_names,
        inputs: decl.inputs.clone(),
        dynamics,
        admissible,
        controls,
        unsafe_set,
        init,
        baseline,
        reference,
        eta,
        aux: pairs.into_iter().map(|(p, _)| p).collect(),
        params,
    })
    .map_err(|e| ExprError::Validation(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_system;

    fn sys(text: &str) -> DynSystem {
        recast(&parse_system(text).unwrap()).unwrap()
    }

    #[test]
    fn canonical_text_round_trips() {
        let sp = vars(&["x", "y"]);
        let p = Polynomial::from_terms(sp.clone(), [(vec![2, 1], 0.1), (vec![0, 1], -3.25), (vec![0, 0], 1.0 / 3.0)]);
        assert_eq!(parse_polynomial(&p.to_string(), &sp).unwrap(), p);
        assert!(parse_polynomial("0", &sp).unwrap().is_zero());
    }

    #[test]
    fn sine_of_state() {
        let d = sys("states: x\ndynamics:\n  dx/dt = sin(x)\nadmissible:\n  x in [-3, 3]\n");
        assert_eq!(d.states(), ["x", "sin_x", "cos_x"]);
        let sp = d.space().clone();
        let v = |n: &str| Polynomial::var(sp.clone(), n).unwrap();
        assert_eq!(d.dynamics()[0], v("sin_x"));
        assert_eq!(d.dynamics()[1], &v("cos_x") * &v("sin_x"));
        assert_eq!(d.dynamics()[2], -(&v("sin_x") * &v("sin_x")));
        assert_eq!(d.admissible().get("cos_x"), Some(Interval { lo: -1.0, hi: 1.0 }));
    }

    #[test]
    fn angle_difference_shares_one_pair() {
        let text = "\
states: t1, t2, w1, w2
dynamics:
  dt1/dt = w1
  dt2/dt = w2
  dw1/dt = -sin(t1 - t2)
  dw2/dt = -sin(t2 - t1)
admissible:
  t1 in [-1, 1]
  t2 in [-1, 1]
  w1 in [-1, 1]
  w2 in [-1, 1]
";
        let d = sys(text);
        assert_eq!(d.aux().len(), 1);
        let sp = d.space().clone();
        let v = |n: &str| Polynomial::var(sp.clone(), n).unwrap();
        let pair = &d.aux()[0];
        let (s, c) = (v(&pair.sin), v(&pair.cos));
        let sign = if pair.arg == &v("t1") - &v("t2") { 1.0 } else { -1.0 };
        let wdiff = (&v("w1") - &v("w2")).scale(sign);
        assert_eq!(d.dynamics()[4], &c * &wdiff);
        assert_eq!(d.dynamics()[5], -(&s * &wdiff));
        // the two swing equations are antisymmetric
        assert_eq!(d.dynamics()[2], -d.dynamics()[3].clone());
    }

    #[test]
    fn trig_free_is_identity() {
        let d = sys("states: x\ninputs: u\ndynamics:\n  dx/dt = u - x^2\nadmissible:\n  x in [-2, 2]\ncontrols:\n  u in [-1, 1]\n");
        assert!(d.aux().is_empty());
        assert_eq!(d.states(), ["x"]);
        let sp = d.space().clone();
        let x = Polynomial::var(sp.clone(), "x").unwrap();
        let u = Polynomial::var(sp, "u").unwrap();
        assert_eq!(d.dynamics()[0], &u - &x.pow(2));
    }

    #[test]
    fn aux_name_collision() {
        let text = "states: x, sin_x\ndynamics:\n  dx/dt = sin(x)\n  dsin_x/dt = 0\nadmissible:\n  x in [-1, 1]\n  sin_x in [-1, 1]\n";
        assert_eq!(recast(&parse_system(text).unwrap()).unwrap_err(), ExprError::AuxCollision("sin_x".into()));
    }

    #[test]
    fn constant_argument_is_evaluated() {
        let d = sys("states: x\nparams:\n  k = 0.5\ndynamics:\n  dx/dt = sin(k)\nadmissible:\n  x in [-1, 1]\n");
        assert!(d.aux().is_empty());
        assert_eq!(d.dynamics()[0].constant_term(), 0.5f64.sin());
    }

    #[test]
    fn initial_aux_values_follow_the_argument() {
        let d = sys("states: x\ndynamics:\n  dx/dt = cos(2*x)\nadmissible:\n  x in [-1, 1]\ninit:\n  x = 0.3\n");
        let full = d.complete_state(&[0.3]);
        assert_eq!(full.len(), 3);
        assert!((full[1] - 0.6f64.sin()).abs() < 1e-15);
        assert!((full[2] - 0.6f64.cos()).abs() < 1e-15);
    }
}
