//! A tiny arithmetic language in one variable `x`, used for custom scale pieces.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, `exp`, `log` (natural),
//! `sqrt`, the constants `e` and `pi`. `×` and `÷` are accepted as operators.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Sqrt(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Config(format!(
                "unexpected trailing input in expression `{src}`"
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, x: f64) -> f64 {
        use Expr::*;
        match self {
            Num(v) => *v,
            Var => x,
            Neg(a) => -a.eval(x),
            Add(a, b) => a.eval(x) + b.eval(x),
            Sub(a, b) => a.eval(x) - b.eval(x),
            Mul(a, b) => a.eval(x) * b.eval(x),
            Div(a, b) => a.eval(x) / b.eval(x),
            Pow(a, b) => match **b {
                Num(k) if k == k.trunc() && k.abs() < 64.0 => a.eval(x).powi(k as i32),
                _ => a.eval(x).powf(b.eval(x)),
            },
            Exp(a) => a.eval(x).exp(),
            Log(a) => a.eval(x).ln(),
            Sqrt(a) => a.eval(x).sqrt(),
        }
    }

    /// Value plus the worst relative size of any denominator, `|den| / magnitude
    /// of its terms`. Small conditioning means the denominator cancelled.
    fn eval_cond(&self, x: f64) -> (f64, f64, f64) {
        use Expr::*;
        match self {
            Num(v) => (*v, v.abs(), f64::INFINITY),
            Var => (x, x.abs(), f64::INFINITY),
            Neg(a) => {
                let (v, m, c) = a.eval_cond(x);
                (-v, m, c)
            }
            Add(a, b) | Sub(a, b) => {
                let (va, ma, ca) = a.eval_cond(x);
                let (vb, mb, cb) = b.eval_cond(x);
                let v = if matches!(self, Add(..)) {
                    va + vb
                } else {
                    va - vb
                };
                (v, ma + mb, ca.min(cb))
            }
            Mul(a, b) => {
                let (va, ma, ca) = a.eval_cond(x);
                let (vb, mb, cb) = b.eval_cond(x);
                (va * vb, ma * mb, ca.min(cb))
            }
            Div(a, b) => {
                let (va, ma, ca) = a.eval_cond(x);
                let (vb, mb, cb) = b.eval_cond(x);
                let cond = if mb > 0.0 {
                    vb.abs() / mb
                } else {
                    f64::INFINITY
                };
                (va / vb, ma / mb, ca.min(cb).min(cond))
            }
            _ => {
                let v = self.eval(x);
                (v, v.abs(), f64::INFINITY)
            }
        }
    }

    /// Evaluation that bridges removable singularities: when a denominator has
    /// cancelled to fewer than six digits the value is interpolated linearly
    /// from two nearby well-conditioned points.
    pub fn eval_guarded(&self, x: f64) -> f64 {
        let (v, _, cond) = self.eval_cond(x);
        if cond >= 1e-6 && !v.is_nan() {
            return v;
        }
        let d = 1e-5 * x.abs().max(1e-12);
        let (lo, hi) = (self.eval(x - d), self.eval(x + d));
        0.5 * (lo + hi)
    }

    /// Denominator conditioning at `x` (see `eval_guarded`).
    pub fn conditioning(&self, x: f64) -> f64 {
        self.eval_cond(x).2
    }

    fn is_const(&self) -> bool {
        use Expr::*;
        match self {
            Num(_) => true,
            Var => false,
            Neg(a) | Exp(a) | Log(a) | Sqrt(a) => a.is_const(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => {
                a.is_const() && b.is_const()
            }
        }
    }

    /// Symbolic derivative with respect to `x`.
    pub fn derivative(&self) -> Expr {
        use Expr::*;
        let b = |e: Expr| Box::new(e);
        if self.is_const() {
            return Num(0.0);
        }
        match self {
            Num(_) => Num(0.0),
            Var => Num(1.0),
            Neg(a) => Neg(b(a.derivative())),
            Add(p, q) => Add(b(p.derivative()), b(q.derivative())),
            Sub(p, q) => Sub(b(p.derivative()), b(q.derivative())),
            Mul(p, q) => Add(
                b(Mul(b(p.derivative()), q.clone())),
                b(Mul(p.clone(), b(q.derivative()))),
            ),
            Div(p, q) => Div(
                b(Sub(
                    b(Mul(b(p.derivative()), q.clone())),
                    b(Mul(p.clone(), b(q.derivative()))),
                )),
                b(Mul(q.clone(), q.clone())),
            ),
            Pow(p, q) if q.is_const() => {
                let k = q.eval(0.0);
                Mul(
                    b(Mul(b(Num(k)), b(Pow(p.clone(), b(Num(k - 1.0)))))),
                    b(p.derivative()),
                )
            }
            Pow(p, q) => {
                // d(p^q) = p^q (q' ln p + q p'/p)
                Mul(
                    b(self.clone()),
                    b(Add(
                        b(Mul(b(q.derivative()), b(Log(p.clone())))),
                        b(Div(b(Mul(q.clone(), b(p.derivative()))), p.clone())),
                    )),
                )
            }
            Exp(a) => Mul(b(self.clone()), b(a.derivative())),
            Log(a) => Div(b(a.derivative()), a.clone()),
            Sqrt(a) => Div(b(a.derivative()), b(Mul(b(Num(2.0)), b(self.clone())))),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Expr::*;
        match self {
            Num(v) => write!(f, "{v}"),
            Var => write!(f, "x"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "({a} ^ {b})"),
            Exp(a) => write!(f, "exp({a})"),
            Log(a) => write!(f, "log({a})"),
            Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // exponent only when followed by a digit (so `2e` stays "2 * e")
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::Config(format!("bad number `{s}` in expression")))?;
                out.push(Tok::Num(v));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            '+' | '-' | '*' | '/' | '^' => {
                out.push(Tok::Op(c));
                i += 1;
            }
            '×' | '·' => {
                out.push(Tok::Op('*'));
                i += 1;
            }
            '÷' => {
                out.push(Tok::Op('/'));
                i += 1;
            }
            '−' => {
                out.push(Tok::Op('-'));
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            _ => {
                return Err(Error::Config(format!(
                    "unexpected character `{c}` in expression"
                )))
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().cloned() {
                Some(Tok::Op(op @ ('*' | '/'))) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = if op == '*' {
                        Expr::Mul(Box::new(lhs), Box::new(rhs))
                    } else {
                        Expr::Div(Box::new(lhs), Box::new(rhs))
                    };
                }
                // implicit multiplication such as `2x` or `2 exp(x)`
                Some(Tok::Num(_)) | Some(Tok::Ident(_)) | Some(Tok::LParen) => {
                    let rhs = self.unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(e),
                    _ => Err(Error::Config("missing `)` in expression".into())),
                }
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "x" => Ok(Expr::Var),
                "e" => Ok(Expr::Num(std::f64::consts::E)),
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "exp" | "log" | "ln" | "sqrt" => {
                    if self.next() != Some(Tok::LParen) {
                        return Err(Error::Config(format!("`{name}` needs parentheses")));
                    }
                    let arg = Box::new(self.expr()?);
                    if self.next() != Some(Tok::RParen) {
                        return Err(Error::Config(format!("missing `)` after `{name}(`")));
                    }
                    Ok(match name.as_str() {
                        "exp" => Expr::Exp(arg),
                        "sqrt" => Expr::Sqrt(arg),
                        _ => Expr::Log(arg),
                    })
                }
                other => Err(Error::Config(format!("unknown identifier `{other}`"))),
            },
            Some(t) => Err(Error::Config(format!(
                "unexpected token {t:?} in expression"
            ))),
            None => Err(Error::Config("unexpected end of expression".into())),
        }
    }
}
