use std::collections::{BTreeSet, HashMap};
use std::fmt;

/// Expression tree for model files. Subtraction is represented as
/// `Add(a, Neg(b))`, which is also how the parser builds it.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(Expr::Neg(Box::new(b))))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn pow(a: Expr, k: u32) -> Expr {
        Expr::Pow(Box::new(a), k)
    }

    pub fn has_trig(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Sin(_) | Expr::Cos(_) => true,
            Expr::Add(a, b) | Expr::Mul(a, b) => a.has_trig() || b.has_trig(),
            Expr::Pow(a, _) | Expr::Neg(a) => a.has_trig(),
        }
    }

    /// Identifiers referenced anywhere in the tree.
    pub fn identifiers(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_identifiers(&mut out);
        out
    }

    fn collect_identifiers<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(v.as_str());
            }
            Expr::Add(a, b) | Expr::Mul(a, b) => {
                a.collect_identifiers(out);
                b.collect_identifiers(out);
            }
            Expr::Pow(a, _) | Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) => a.collect_identifiers(out),
        }
    }

    /// Arguments of every `sin`/`cos` node, outermost first.
    pub fn trig_args(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        self.collect_trig_args(&mut out);
        out
    }

    fn collect_trig_args<'a>(&'a self, out: &mut Vec<&'a Expr>) {
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Sin(a) | Expr::Cos(a) => out.push(a),
            Expr::Add(a, b) | Expr::Mul(a, b) => {
                a.collect_trig_args(out);
                b.collect_trig_args(out);
            }
            Expr::Pow(a, _) | Expr::Neg(a) => a.collect_trig_args(out),
        }
    }

    /// Numeric evaluation; unknown identifiers evaluate to `None`.
    pub fn eval(&self, env: &HashMap<&str, f64>) -> Option<f64> {
        Some(match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => *env.get(v.as_str())?,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Expr::Pow(a, k) => a.eval(env)?.powi(*k as i32),
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Sin(a) => a.eval(env)?.sin(),
            Expr::Cos(a) => a.eval(env)?.cos(),
        })
    }
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_POW: u8 = 4;

fn write_expr(e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let paren = |prec: u8| min_prec > prec;
    match e {
        Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => write!(f, "({c})"),
        Expr::Const(c) => write!(f, "{c}"),
        Expr::Var(v) => write!(f, "{v}"),
        Expr::Add(a, b) => {
            if paren(PREC_ADD) {
                write!(f, "(")?;
            }
            write_expr(a, PREC_ADD, f)?;
            match b.as_ref() {
                Expr::Neg(c) => {
                    write!(f, " - ")?;
                    write_expr(c, PREC_MUL, f)?;
                }
                other => {
                    write!(f, " + ")?;
                    write_expr(other, PREC_MUL, f)?;
                }
            }
            if paren(PREC_ADD) {
                write!(f, ")")?;
            }
            Ok(())
        }
        Expr::Mul(a, b) => {
            if paren(PREC_MUL) {
                write!(f, "(")?;
            }
            write_expr(a, PREC_MUL, f)?;
            write!(f, "*")?;
            write_expr(b, PREC_UNARY, f)?;
            if paren(PREC_MUL) {
                write!(f, ")")?;
            }
            Ok(())
        }
        Expr::Neg(a) => {
            if paren(PREC_UNARY) {
                write!(f, "(")?;
            }
            write!(f, "-")?;
            match a.as_ref() {
                // `-2` would be read back as the literal -2
                Expr::Const(c) if *c >= 0.0 => write!(f, "({c})")?,
                inner => write_expr(inner, PREC_UNARY, f)?,
            }
            if paren(PREC_UNARY) {
                write!(f, ")")?;
            }
            Ok(())
        }
        Expr::Pow(a, k) => {
            if paren(PREC_POW) {
                write!(f, "(")?;
            }
            write_expr(a, PREC_POW + 1, f)?;
            write!(f, "^{k}")?;
            if paren(PREC_POW) {
                write!(f, ")")?;
            }
            Ok(())
        }
        Expr::Sin(a) => {
            write!(f, "sin(")?;
            write_expr(a, 0, f)?;
            write!(f, ")")
        }
        Expr::Cos(a) => {
            write!(f, "cos(")?;
            write_expr(a, 0, f)?;
            write!(f, ")")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, 0, f)
    }
}
