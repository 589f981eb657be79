use std::collections::HashSet;

use super::ast::Expr;
use super::lexer::{lex_line, Tok, Token};
use super::parser::{ExprParser, Scope};
use super::{BoundDecl, ExprError, SystemDecl, TrigDecl};

const SECTIONS: [&str; 11] = [
    "states",
    "inputs",
    "params",
    "trig",
    "dynamics",
    "admissible",
    "controls",
    "unsafe",
    "init",
    "baseline",
    "reference",
];

const RESERVED: [&str; 7] = ["sin", "cos", "sincos", "in", "when", "unsafe", "dt"];

/// Parses one standalone expression. Identifiers are not checked.
pub fn parse_expr(text: &str) -> Result<Expr, ExprError> {
    let toks = lex_line(text, 1)?;
    let mut p = ExprParser::new(&toks, None, 1, text.chars().count());
    let e = p.expr()?;
    if !p.at_end() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

/// Parses a model file.
///
/// ```text
/// states: v, Q
/// inputs: u
/// params:
///   vref = 0.48
/// dynamics:
///   dv/dt = u
///   dQ/dt = vref - v - Q
/// admissible:
///   v in [0.44, 0.52]
///   Q in [-1, 1]
/// controls:
///   u in [-0.05, 0.05]
/// unsafe:
///   unsafe when 0.0144^2 - (v - vref)^2 < 0
/// init:
///   v in [0.475, 0.485]
///   Q = 0
/// ```
///
/// Optional sections: `baseline:` (`u = expr`, the trusted controller),
/// `reference:` (`v = expr`, tracking targets) and `trig:`
/// (`s, c = sincos(expr)`, marking existing states as an auxiliary pair).
/// A parameter named `eta` sets the control period.
pub fn parse_system(text: &str) -> Result<SystemDecl, ExprError> {
    let mut decl = SystemDecl::default();
    let mut section: Option<&'static str> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let code = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        };
        let toks = lex_line(code, line_no)?;
        if toks.is_empty() {
            continue;
        }
        let mut body: &[Token] = &toks;
        if let (Some(Tok::Ident(name)), Some(Tok::Colon)) = (toks.first().map(|t| &t.tok), toks.get(1).map(|t| &t.tok)) {
            match SECTIONS.iter().find(|s| **s == name) {
                Some(s) => {
                    section = Some(s);
                    body = &toks[2..];
                }
                None => {
                    return Err(ExprError::Syntax {
                        line: line_no,
                        col: toks[0].col,
                        msg: format!("unknown section `{name}`"),
                    })
                }
            }
        }
        if body.is_empty() {
            continue;
        }
        let Some(sec) = section else {
            return Err(ExprError::Syntax { line: line_no, col: body[0].col, msg: "expected a section header".into() });
        };
        let len = code.chars().count();
        parse_line(&mut decl, sec, body, line_no, len)?;
    }
    validate(&decl)?;
    Ok(decl)
}

fn parse_line(decl: &mut SystemDecl, sec: &str, toks: &[Token], line: usize, len: usize) -> Result<(), ExprError> {
    match sec {
        "states" | "inputs" => {
            let mut p = ExprParser::new(toks, None, line, len);
            loop {
                let (l, c) = p.here();
                let name = p.ident()?;
                check_new_name(decl, &name, l, c)?;
                if sec == "states" {
                    decl.states.push(name);
                } else {
                    decl.inputs.push(name);
                }
                if p.at_end() {
                    break;
                }
                p.expect(&Tok::Comma, "`,`")?;
            }
            Ok(())
        }
        "params" => {
            let (name, pos) = lhs_name(toks, line, len)?;
            check_new_name(decl, &name, pos.0, pos.1)?;
            let scope = Scope::new(decl.params.iter().map(|(n, _)| n.as_str()));
            let e = rhs(&toks[2..], &scope, line, len)?;
            decl.params.push((name, e));
            Ok(())
        }
        "trig" => {
            let mut p = ExprParser::new(toks, None, line, len);
            let (l1, c1) = p.here();
            let s = p.ident()?;
            p.expect(&Tok::Comma, "`,`")?;
            let (l2, c2) = p.here();
            let c = p.ident()?;
            p.expect(&Tok::Eq, "`=`")?;
            let (l3, c3) = p.here();
            if p.ident()? != "sincos" {
                return Err(ExprError::Syntax { line: l3, col: c3, msg: "expected `sincos`".into() });
            }
            p.expect(&Tok::LParen, "`(`")?;
            let inner_start = p.pos();
            let mut depth = 1usize;
            let mut end = inner_start;
            while end < toks.len() {
                match toks[end].tok {
                    Tok::LParen => depth += 1,
                    Tok::RParen => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    _ => {}
                }
                end += 1;
            }
            if end >= toks.len() || end + 1 != toks.len() {
                return Err(ExprError::Syntax { line, col: len + 1, msg: "expected `)` at end of line".into() });
            }
            for (name, l, col) in [(&s, l1, c1), (&c, l2, c2)] {
                if !decl.states.contains(name) {
                    return Err(ExprError::UndeclaredIdentifier { name: name.clone(), line: l, col });
                }
            }
            let scope = state_scope(decl, false);
            let arg = rhs(&toks[inner_start..end], &scope, line, len)?;
            if arg.has_trig() {
                return Err(ExprError::NestedTrig { line, col: toks[inner_start].col });
            }
            decl.trig.push(TrigDecl { sin: s, cos: c, arg });
            Ok(())
        }
        "dynamics" => {
            let mut p = ExprParser::new(toks, None, line, len);
            let (l, c) = p.here();
            let d = p.ident()?;
            let state = d.strip_prefix('d').unwrap_or("");
            if !decl.states.iter().any(|s| s == state) {
                return Err(ExprError::UndeclaredIdentifier { name: state.to_string(), line: l, col: c + 1 });
            }
            p.expect(&Tok::Slash, "`/`")?;
            let (l2, c2) = p.here();
            if p.ident()? != "dt" {
                return Err(ExprError::Syntax { line: l2, col: c2, msg: "expected `dt`".into() });
            }
            p.expect(&Tok::Eq, "`=`")?;
            let scope = state_scope(decl, true);
            let e = rhs(&toks[p.pos()..], &scope, line, len)?;
            decl.dynamics.push((state.to_string(), e));
            Ok(())
        }
        "admissible" | "controls" | "init" => {
            let names: Vec<&str> = if sec == "controls" {
                decl.inputs.iter().map(String::as_str).collect()
            } else {
                decl.states.iter().map(String::as_str).collect()
            };
            let b = bound_line(decl, toks, &names, line, len)?;
            let list = match sec {
                "admissible" => &mut decl.admissible,
                "controls" => &mut decl.controls,
                _ => &mut decl.init,
            };
            if list.iter().any(|x| x.name == b.name) {
                return Err(ExprError::Validation(format!("line {line}: `{}` bounded twice in {sec}", b.name)));
            }
            list.push(b);
            Ok(())
        }
        "unsafe" => {
            let mut p = ExprParser::new(toks, None, line, len);
            for kw in ["unsafe", "when"] {
                let (l, c) = p.here();
                if p.ident()? != kw {
                    return Err(ExprError::Syntax { line: l, col: c, msg: format!("expected `{kw}`") });
                }
            }
            let lt = toks[p.pos()..].iter().rposition(|t| t.tok == Tok::Lt).map(|k| k + p.pos());
            let Some(lt) = lt else {
                return Err(ExprError::Syntax { line, col: len + 1, msg: "expected `< 0`".into() });
            };
            match &toks[lt + 1..] {
                [Token { tok: Tok::Num(z, _), .. }] if *z == 0.0 => {}
                _ => {
                    let col = toks.get(lt + 1).map_or(len + 1, |t| t.col);
                    return Err(ExprError::Syntax { line, col, msg: "expected `0` after `<`".into() });
                }
            }
            let scope = state_scope(decl, false);
            let e = rhs(&toks[p.pos()..lt], &scope, line, len)?;
            decl.unsafe_set.push(e);
            Ok(())
        }
        "baseline" | "reference" => {
            let (name, (l, c)) = lhs_name(toks, line, len)?;
            let (known, list) = if sec == "baseline" {
                (&decl.inputs, &decl.baseline)
            } else {
                (&decl.states, &decl.reference)
            };
            if !known.contains(&name) {
                return Err(ExprError::UndeclaredIdentifier { name, line: l, col: c });
            }
            if list.iter().any(|(n, _)| *n == name) {
                return Err(ExprError::Validation(format!("line {line}: `{name}` given twice in {sec}")));
            }
            let e = if sec == "baseline" {
                let scope = state_scope(decl, false);
                rhs(&toks[2..], &scope, line, len)?
            } else {
                let scope = Scope::new(decl.params.iter().map(|(n, _)| n.as_str()));
                rhs(&toks[2..], &scope, line, len)?
            };
            if sec == "baseline" {
                decl.baseline.push((name, e));
            } else {
                decl.reference.push((name, e));
            }
            Ok(())
        }
        _ => unreachable!("unknown section {sec}"),
    }
}

fn check_new_name(decl: &SystemDecl, name: &str, line: usize, col: usize) -> Result<(), ExprError> {
    if RESERVED.contains(&name) {
        return Err(ExprError::Syntax { line, col, msg: format!("`{name}` is reserved") });
    }
    let taken = decl.states.iter().chain(&decl.inputs).any(|n| n == name) || decl.params.iter().any(|(n, _)| n == name);
    if taken {
        return Err(ExprError::Syntax { line, col, msg: format!("`{name}` is already declared") });
    }
    Ok(())
}

fn state_scope(decl: &SystemDecl, with_inputs: bool) -> Scope<'_> {
    let base = decl.states.iter().map(String::as_str).chain(decl.params.iter().map(|(n, _)| n.as_str()));
    let scope = Scope::new(base);
    if with_inputs {
        scope.with_inputs(decl.inputs.iter().map(String::as_str))
    } else {
        scope
    }
}

/// `name = ...`: returns the name and its position.
fn lhs_name(toks: &[Token], line: usize, len: usize) -> Result<(String, (usize, usize)), ExprError> {
    let mut p = ExprParser::new(toks, None, line, len);
    let pos = p.here();
    let name = p.ident()?;
    p.expect(&Tok::Eq, "`=`")?;
    Ok((name, pos))
}

fn rhs(toks: &[Token], scope: &Scope<'_>, line: usize, len: usize) -> Result<Expr, ExprError> {
    let mut p = ExprParser::new(toks, Some(scope), line, len);
    let e = p.expr()?;
    if !p.at_end() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

fn bound_line(decl: &SystemDecl, toks: &[Token], names: &[&str], line: usize, len: usize) -> Result<BoundDecl, ExprError> {
    let mut p = ExprParser::new(toks, None, line, len);
    let (l, c) = p.here();
    let name = p.ident()?;
    if !names.contains(&name.as_str()) {
        return Err(ExprError::UndeclaredIdentifier { name, line: l, col: c });
    }
    let scope = Scope::new(decl.params.iter().map(|(n, _)| n.as_str()));
    match p.peek() {
        Some(Tok::Eq) => {
            let e = rhs(&toks[p.pos() + 1..], &scope, line, len)?;
            Ok(BoundDecl { name, lo: e.clone(), hi: e })
        }
        Some(Tok::Ident(kw)) if kw == "in" => {
            p.expect(&Tok::Ident("in".into()), "`in`")?;
            p.expect(&Tok::LBracket, "`[`")?;
            let start = p.pos();
            // the comma separating the endpoints is the first one at paren depth 0
            let mut depth = 0i32;
            let mut comma = None;
            let mut close = None;
            for (k, t) in toks.iter().enumerate().skip(start) {
                match t.tok {
                    Tok::LParen => depth += 1,
                    Tok::RParen => depth -= 1,
                    Tok::Comma if depth == 0 && comma.is_none() => comma = Some(k),
                    Tok::RBracket if depth == 0 => {
                        close = Some(k);
                        break;
                    }
                    _ => {}
                }
            }
            let (Some(comma), Some(close)) = (comma, close) else {
                return Err(ExprError::Syntax { line, col: len + 1, msg: "expected `[lo, hi]`".into() });
            };
            if close + 1 != toks.len() {
                return Err(ExprError::Syntax { line, col: toks[close + 1].col, msg: "unexpected trailing input".into() });
            }
            let lo = rhs(&toks[start..comma], &scope, line, len)?;
            let hi = rhs(&toks[comma + 1..close], &scope, line, len)?;
            Ok(BoundDecl { name, lo, hi })
        }
        _ => Err(p.error("expected `in` or `=`")),
    }
}

/// Structural checks that need the whole file.
pub(super) fn validate(decl: &SystemDecl) -> Result<(), ExprError> {
    if decl.states.is_empty() {
        return Err(ExprError::Validation("no states declared".into()));
    }
    for s in &decl.states {
        match decl.dynamics.iter().filter(|(n, _)| n == s).count() {
            0 => return Err(ExprError::MissingDerivative(s.clone())),
            1 => {}
            _ => return Err(ExprError::DuplicateDerivative(s.clone())),
        }
    }
    let mut aux = HashSet::new();
    for t in &decl.trig {
        for n in [&t.sin, &t.cos] {
            if !aux.insert(n.as_str()) {
                return Err(ExprError::AuxCollision(n.clone()));
            }
        }
    }
    let params = decl.param_values()?;
    if let Some((_, eta)) = params.iter().find(|(n, _)| n == "eta") {
        if !(*eta > 0.0) {
            return Err(ExprError::Validation(format!("eta must be positive, got {eta}")));
        }
    }

    for (name, lo, hi) in decl.eval_bounds(&decl.admissible)? {
        if !(lo < hi) {
            return Err(ExprError::Validation(format!("admissible bounds of `{name}` need lo < hi, got [{lo}, {hi}]")));
        }
    }
    for s in &decl.states {
        if !aux.contains(s.as_str()) && !decl.admissible.iter().any(|b| &b.name == s) {
            return Err(ExprError::Validation(format!("state `{s}` has no admissible bounds")));
        }
    }
    for (name, lo, hi) in decl.eval_bounds(&decl.controls)? {
        if !(lo <= hi) {
            return Err(ExprError::Validation(format!("control bounds of `{name}` are empty: [{lo}, {hi}]")));
        }
    }
    for i in &decl.inputs {
        if !decl.controls.iter().any(|b| &b.name == i) {
            return Err(ExprError::Validation(format!("input `{i}` has no control bounds")));
        }
    }
    for (name, lo, hi) in decl.eval_bounds(&decl.init)? {
        if aux.contains(name.as_str()) {
            return Err(ExprError::Validation(format!("auxiliary state `{name}` gets its initial value from its argument")));
        }
        if !(lo <= hi) {
            return Err(ExprError::Validation(format!("initial range of `{name}` is empty: [{lo}, {hi}]")));
        }
    }
    if !decl.baseline.is_empty() {
        for i in &decl.inputs {
            if !decl.baseline.iter().any(|(n, _)| n == i) {
                return Err(ExprError::Validation(format!("baseline gives no law for input `{i}`")));
            }
        }
    }
    let env: std::collections::HashMap<&str, f64> = params.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    for (name, e) in &decl.reference {
        if e.eval(&env).is_none() {
            return Err(ExprError::Validation(format!("reference for `{name}` is not constant")));
        }
    }
    Ok(())
}
