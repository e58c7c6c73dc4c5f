//! Arithmetic expressions over `x`, `v`, `t` for user-defined fields.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 'x' | 'v' | 't' | func '(' sum ')' | '(' sum ')'
//! ```

use std::fmt;

use thiserror::Error;

use crate::model::VectorField;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at byte {position}: {message} (expected {})", expected.join(" | "))]
pub struct SyntaxError {
    pub position: usize,
    pub message: String,
    pub expected: Vec<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative value {0}")]
    NegativeSqrt(f64),
    #[error("negative base {base} raised to non-integer power {exponent}")]
    NegativePower { base: f64, exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    V,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sqrt,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64, v: f64, t: f64) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Num(c) => *c,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::V) => v,
            Expr::Var(Var::T) => t,
            Expr::Neg(e) => -e.eval(x, v, t)?,
            Expr::Call(f, e) => {
                let a = e.eval(x, v, t)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Abs => a.abs(),
                    Func::Sqrt if a < 0.0 => return Err(EvalError::NegativeSqrt(a)),
                    Func::Sqrt => a.sqrt(),
                }
            }
            Expr::Bin(op, l, r) => {
                let a = l.eval(x, v, t)?;
                let b = r.eval(x, v, t)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div if b == 0.0 => return Err(EvalError::DivisionByZero),
                    BinOp::Div => a / b,
                    BinOp::Pow => power(a, b)?,
                }
            }
        })
    }

    /// Wraps the expression as a vector field; evaluation errors surface as
    /// field errors.
    pub fn into_field(self, label: impl Into<String>) -> VectorField {
        VectorField::fallible(label, move |x, v, t| {
            self.eval(x, v, t).map_err(|e| crate::error::FieldError::Eval(e.to_string()))
        })
    }
}

fn power(a: f64, b: f64) -> Result<f64, EvalError> {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        if a == 0.0 && b < 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        return Ok(a.powi(b as i32));
    }
    if a < 0.0 {
        return Err(EvalError::NegativePower { base: a, exponent: b });
    }
    Ok(a.powf(b))
}

/// Fully parenthesized form; reparses to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `{:?}` keeps a decimal point and round-trips exactly.
            Expr::Num(c) => write!(f, "{c:?}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::V) => f.write_str("v"),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(op, l, r) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({l} {sym} {r})")
            }
        }
    }
}

pub fn parse_expression(text: &str) -> Result<Expr, SyntaxError> {
    let mut p = Parser { src: text, pos: 0 };
    let e = p.sum()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(p.error("unexpected trailing input", &["operator", "end of input"]));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

const OPERAND: &[&str] = &["number", "x", "v", "t", "function", "(", "-"];

impl Parser<'_> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn error(&self, message: &str, expected: &[&'static str]) -> SyntaxError {
        SyntaxError { position: self.pos, message: message.to_string(), expected: expected.to_vec() }
    }

    fn sum(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some('+') => BinOp::Add,
                Some('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some('*') => BinOp::Mul,
                Some('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.atom()?;
        if self.eat('^') {
            // right-associative: the exponent may itself be a power
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let Some(c) = self.peek() else {
            return Err(self.error("unexpected end of input", OPERAND));
        };
        if c == '(' {
            self.pos += 1;
            let e = self.sum()?;
            if !self.eat(')') {
                return Err(self.error("unclosed parenthesis", &[")", "operator"]));
            }
            return Ok(e);
        }
        if c.is_ascii_digit() || c == '.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = self.pos;
            let rest = &self.src[start..];
            let len = rest.find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_')).unwrap_or(rest.len());
            let ident = &rest[..len];
            let var = match ident {
                "x" => Some(Var::X),
                "v" => Some(Var::V),
                "t" => Some(Var::T),
                _ => None,
            };
            if let Some(var) = var {
                self.pos += len;
                return Ok(Expr::Var(var));
            }
            let func = match ident {
                "sin" => Func::Sin,
                "cos" => Func::Cos,
                "sqrt" => Func::Sqrt,
                "abs" => Func::Abs,
                _ => {
                    return Err(SyntaxError {
                        position: start,
                        message: format!("unknown identifier `{ident}`"),
                        expected: vec!["x", "v", "t", "sin", "cos", "sqrt", "abs"],
                    })
                }
            };
            self.pos += len;
            if !self.eat('(') {
                return Err(self.error("function name must be followed by an argument", &["("]));
            }
            let arg = self.sum()?;
            if !self.eat(')') {
                return Err(self.error("unclosed function call", &[")", "operator"]));
            }
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        Err(self.error(&format!("unexpected character `{c}`"), OPERAND))
    }

    fn number(&mut self) -> Result<Expr, SyntaxError> {
        let bytes = self.src.as_bytes();
        let start = self.pos;
        let mut i = start;
        let digits = |i: &mut usize| {
            while *i < bytes.len() && bytes[*i].is_ascii_digit() {
                *i += 1;
            }
        };
        digits(&mut i);
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            digits(&mut i);
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                i = j;
                digits(&mut i);
            }
        }
        let text = &self.src[start..i];
        match text.parse::<f64>() {
            Ok(c) => {
                self.pos = i;
                // "2x" would otherwise be read as a number followed by garbage
                if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
                    return Err(self.error("implicit multiplication is not supported", &["*", "operator"]));
                }
                Ok(Expr::Num(c))
            }
            Err(_) => Err(self.error(&format!("malformed number `{text}`"), &["number"])),
        }
    }
}
