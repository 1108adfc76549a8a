//! Whitelisted field expressions over grid coordinates.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | atom
//! atom    := number | var | call | '(' expr ')'
//! var     := 'x'<i> | 'y'<i> | 're_z'<i> | 'absz2'
//! call    := ('cospi2' | 'sinpi2') '(' expr ')' | 'max' '(' expr ',' expr ')'
//! ```
//!
//! `cospi2(t) = cos(2πt)`, `sinpi2(t) = sin(2πt)`. Indices start at 1 and refer
//! to the complex coordinate `z_i = x_i + i y_i`.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Denominators below this in magnitude are rejected.
pub const DIVISION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExprError {
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("division by {value:e} (|.| < {DIVISION_FLOOR:e})")]
    Division { value: f64 },
    #[error("coordinate index {index} outside 1..={n}")]
    Coordinate { index: usize, n: usize },
    #[error("non-finite value {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    X(usize),
    Y(usize),
    AbsZ2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    CosPi2,
    SinPi2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
    Max(Box<Node>, Box<Node>),
}

/// A parsed expression, keeping its source text for serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Largest coordinate index referenced (0 if none).
    pub fn max_index(&self) -> usize {
        fn walk(node: &Node) -> usize {
            match node {
                Node::Num(_) | Node::Var(Var::AbsZ2) => 0,
                Node::Var(Var::X(i) | Var::Y(i)) => *i,
                Node::Neg(a) | Node::Call(_, a) => walk(a),
                Node::Bin(_, a, b) | Node::Max(a, b) => walk(a).max(walk(b)),
            }
        }
        walk(&self.root)
    }

    /// Evaluates at real coordinates ordered `(x_1, y_1, x_2, y_2, ..)`.
    pub fn eval(&self, coords: &[f64]) -> Result<f64, ExprError> {
        let value = eval_node(&self.root, coords)?;
        if !value.is_finite() {
            return Err(ExprError::NonFinite(value));
        }
        Ok(value)
    }
}

fn coordinate(coords: &[f64], axis: usize, index: usize) -> Result<f64, ExprError> {
    coords.get(axis).copied().ok_or(ExprError::Coordinate {
        index,
        n: coords.len() / 2,
    })
}

fn eval_node(node: &Node, x: &[f64]) -> Result<f64, ExprError> {
    Ok(match node {
        Node::Num(v) => *v,
        Node::Var(Var::X(i)) => coordinate(x, 2 * (i - 1), *i)?,
        Node::Var(Var::Y(i)) => coordinate(x, 2 * (i - 1) + 1, *i)?,
        Node::Var(Var::AbsZ2) => x.iter().map(|v| v * v).sum(),
        Node::Neg(a) => -eval_node(a, x)?,
        Node::Bin(op, a, b) => {
            let (a, b) = (eval_node(a, x)?, eval_node(b, x)?);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b.abs() < DIVISION_FLOOR {
                        return Err(ExprError::Division { value: b });
                    }
                    a / b
                }
            }
        }
        Node::Call(Func::CosPi2, a) => (TAU * eval_node(a, x)?).cos(),
        Node::Call(Func::SinPi2, a) => (TAU * eval_node(a, x)?).sin(),
        Node::Max(a, b) => eval_node(a, x)?.max(eval_node(b, x)?),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let literal = &text[start..i];
            let value = literal.parse::<f64>().map_err(|_| ExprError::Parse {
                position: start,
                message: format!("malformed number '{literal}'"),
            })?;
            out.push((start, Tok::Num(value)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(text[start..i].to_string())));
        } else if "+-*/(),".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            let ch = text[i..].chars().next().unwrap_or(c);
            return Err(ExprError::Parse {
                position: i,
                message: format!("unexpected character '{ch}'"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Parse {
            position: self.position(),
            message: message.into(),
        })
    }

    fn expect(&mut self, sym: char) -> Result<(), ExprError> {
        if self.peek() == Some(&Tok::Sym(sym)) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(format!("expected '{sym}'"))
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Sym(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Sym(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.peek() == Some(&Tok::Sym('-')) {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let start = self.position();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                self.identifier(&name, start)
            }
            Some(_) => self.error("expected a number, variable or function"),
            None => self.error("unexpected end of expression"),
        }
    }

    fn identifier(&mut self, name: &str, start: usize) -> Result<Node, ExprError> {
        let func = match name {
            "absz2" => return Ok(Node::Var(Var::AbsZ2)),
            "cospi2" => Some(Func::CosPi2),
            "sinpi2" => Some(Func::SinPi2),
            "max" => None,
            _ => return variable(name, start),
        };
        self.expect('(')?;
        let a = self.expr()?;
        let node = match func {
            Some(func) => Node::Call(func, Box::new(a)),
            None => {
                self.expect(',')?;
                Node::Max(Box::new(a), Box::new(self.expr()?))
            }
        };
        self.expect(')')?;
        Ok(node)
    }
}

fn variable(name: &str, start: usize) -> Result<Node, ExprError> {
    let unknown = || ExprError::Parse {
        position: start,
        message: format!("unknown identifier '{name}'"),
    };
    let (prefix, digits) = if let Some(rest) = name.strip_prefix("re_z") {
        ('x', rest)
    } else if let Some(rest) = name.strip_prefix('x') {
        ('x', rest)
    } else if let Some(rest) = name.strip_prefix('y') {
        ('y', rest)
    } else {
        return Err(unknown());
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(unknown());
    }
    let index: usize = digits.parse().map_err(|_| unknown())?;
    if index == 0 {
        return Err(ExprError::Parse {
            position: start,
            message: "coordinate indices start at 1".into(),
        });
    }
    Ok(Node::Var(if prefix == 'x' {
        Var::X(index)
    } else {
        Var::Y(index)
    }))
}

/// Parses `text` in the whitelist grammar.
pub fn parse_expression(text: &str) -> Result<Expr, ExprError> {
    let mut parser = Parser {
        toks: tokenize(text)?,
        pos: 0,
        end: text.len(),
    };
    let root = parser.expr()?;
    if parser.pos != parser.toks.len() {
        return parser.error("unexpected trailing input");
    }
    Ok(Expr {
        source: text.to_string(),
        root,
    })
}

impl FromStr for Expr {
    type Err = ExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expression(s)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_expression(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(text: &str, x: &[f64]) -> f64 {
        parse_expression(text).unwrap().eval(x).unwrap()
    }

    #[test]
    fn documented_examples() {
        assert_eq!(eval("2*absz2", &[1.0, 0.0, 0.0, 0.0]), 2.0);
        assert_eq!(eval("re_z1", &[0.3, 0.7, 0.0, 0.0]), 0.3);
        let v = eval("max(cospi2(x1), cospi2(y1)) * 0.05", &[0.0, 0.5, 0.0, 0.0]);
        assert!((v - 0.05).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_unary_minus() {
        assert_eq!(eval("1 + 2 * 3 - 4 / 2", &[]), 5.0);
        assert_eq!(eval("-(1 + 2) * -2", &[]), 6.0);
        assert_eq!(eval("2 - 3 - 4", &[]), -5.0);
        assert_eq!(eval("1.5e1 + .5", &[]), 15.5);
        assert_eq!(eval("x2 * y2", &[0.0, 0.0, 3.0, 4.0]), 12.0);
        assert!((eval("sinpi2(0.25)", &[]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parse_errors_carry_positions() {
        let cases = [
            ("1 + foo", 4),
            ("2 * $", 4),
            ("max(1 2)", 6),
            ("(1 + 2", 6),
            ("x0", 0),
            ("cospi2 1", 7),
            ("1 2", 2),
            ("", 0),
        ];
        for (text, expected) in cases {
            match parse_expression(text) {
                Err(ExprError::Parse { position, .. }) => assert_eq!(position, expected, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn evaluation_errors() {
        let e = parse_expression("1 / (x1 - 0.5)").unwrap();
        assert!(matches!(e.eval(&[0.5, 0.0]), Err(ExprError::Division { .. })));
        assert!((e.eval(&[1.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        let e = parse_expression("x3").unwrap();
        assert_eq!(e.max_index(), 3);
        assert!(matches!(e.eval(&[0.0; 4]), Err(ExprError::Coordinate { index: 3, n: 2 })));
    }

    #[test]
    fn serde_round_trip() {
        let e = parse_expression("0.05 * max(cospi2(x1), cospi2(y1))").unwrap();
        let json = serde_json::to_string(&e).unwrap();
        let back: Expr = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
        assert!(serde_json::from_str::<Expr>("\"1 +\"").is_err());
    }
}
