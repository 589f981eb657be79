use std::collections::HashSet;

use super::ast::Expr;
use super::lexer::{Tok, Token};
use super::ExprError;

/// Which identifiers an expression may reference.
pub struct Scope<'a> {
    pub allowed: HashSet<&'a str>,
    /// Names that may appear in the expression but never inside sin/cos.
    pub no_trig: HashSet<&'a str>,
}

impl<'a> Scope<'a> {
    pub fn new<I: IntoIterator<Item = &'a str>>(allowed: I) -> Self {
        Self { allowed: allowed.into_iter().collect(), no_trig: HashSet::new() }
    }

    pub fn with_inputs<I: IntoIterator<Item = &'a str>>(mut self, inputs: I) -> Self {
        for i in inputs {
            self.allowed.insert(i);
            self.no_trig.insert(i);
        }
        self
    }
}

/// Recursive-descent parser over the tokens of one line.
///
/// ```text
/// expr  := term (('+' | '-') term)*
/// term  := unary ('*' unary)*
/// unary := '-' unary | power
/// power := atom ('^' INT)?
/// atom  := NUMBER | IDENT | ('sin' | 'cos') '(' expr ')' | '(' expr ')'
/// ```
pub struct ExprParser<'t, 's> {
    toks: &'t [Token],
    pos: usize,
    scope: Option<&'s Scope<'s>>,
    trig_depth: usize,
    line: usize,
    line_len: usize,
}

impl<'t, 's> ExprParser<'t, 's> {
    pub fn new(toks: &'t [Token], scope: Option<&'s Scope<'s>>, line: usize, line_len: usize) -> Self {
        Self { toks, pos: 0, scope, trig_depth: 0, line, line_len }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    /// Position of the current token, or one past the end of the line.
    pub fn here(&self) -> (usize, usize) {
        match self.toks.get(self.pos) {
            Some(t) => (t.line, t.col),
            None => (self.line, self.line_len + 1),
        }
    }

    pub fn error(&self, msg: impl Into<String>) -> ExprError {
        let (line, col) = self.here();
        ExprError::Syntax { line, col, msg: msg.into() }
    }

    pub fn expect(&mut self, want: &Tok, what: &str) -> Result<(), ExprError> {
        match self.peek() {
            Some(t) if t == want => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    pub fn ident(&mut self) -> Result<String, ExprError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    pub fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::add(lhs, rhs);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::sub(lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Star) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::mul(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if let Some(Tok::Minus) = self.peek() {
            // a literal directly after unary minus is a negative constant,
            // unless it is the base of a power (`-2^2` is `-(2^2)`)
            if let (Some(Tok::Num(v, _)), next) = (self.peek_at(1), self.peek_at(2)) {
                if next != Some(&Tok::Caret) {
                    let v = -*v;
                    self.pos += 2;
                    return Ok(Expr::Const(v));
                }
            }
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            self.pos += 1;
            let (line, col) = self.here();
            match self.peek() {
                Some(Tok::Num(v, integral)) if *integral && *v >= 0.0 && *v <= u32::MAX as f64 => {
                    let k = *v as u32;
                    self.pos += 1;
                    return Ok(Expr::pow(base, k));
                }
                _ => return Err(ExprError::NonIntegerExponent { line, col }),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let (line, col) = self.here();
        match self.peek().cloned() {
            Some(Tok::Num(v, _)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) if (name == "sin" || name == "cos") && self.peek_at(1) == Some(&Tok::LParen) => {
                if self.trig_depth > 0 {
                    return Err(ExprError::NestedTrig { line, col });
                }
                self.pos += 2;
                self.trig_depth += 1;
                let arg = self.expr();
                self.trig_depth -= 1;
                let arg = arg?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(if name == "sin" { Expr::Sin(Box::new(arg)) } else { Expr::Cos(Box::new(arg)) })
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(scope) = self.scope {
                    if !scope.allowed.contains(name.as_str()) {
                        return Err(ExprError::UndeclaredIdentifier { name, line, col });
                    }
                    if self.trig_depth > 0 && scope.no_trig.contains(name.as_str()) {
                        return Err(ExprError::TrigOfInput { name, line, col });
                    }
                }
                Ok(Expr::Var(name))
            }
            _ => Err(self.error("expected expression")),
        }
    }
}
