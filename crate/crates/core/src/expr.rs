//! Closed-form coefficient expressions over `x1, x2`.
//!
//! Grammar: numeric literals, `x1`, `x2`, `+ - * / ^`, parentheses, the
//! functions `sin cos exp abs` (one argument), `min max` (two) and the
//! indicator `chi(a, b, c, d)` of `[a, b] x [c, d]`. `^` binds tighter than
//! unary minus and associates to the right.

use crate::error::{Error, Result};
use crate::geometry::{Mesh, NodalFunction, Point};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    X1,
    X2,
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Min,
    Max,
    Chi,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "exp" => (Func::Exp, 1),
            "abs" => (Func::Abs, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            "chi" => (Func::Chi, 4),
            _ => return None,
        })
    }
}

impl Expr {
    pub fn eval(&self, x: Point) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X1 => x[0],
            Expr::X2 => x[1],
            Expr::Neg(e) => -e.eval(x),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    '/' => a / b,
                    _ => a.powf(b),
                }
            }
            Expr::Call(f, args) => {
                let v: Vec<f64> = args.iter().map(|e| e.eval(x)).collect();
                match f {
                    Func::Sin => v[0].sin(),
                    Func::Cos => v[0].cos(),
                    Func::Exp => v[0].exp(),
                    Func::Abs => v[0].abs(),
                    Func::Min => v[0].min(v[1]),
                    Func::Max => v[0].max(v[1]),
                    Func::Chi => {
                        let inside = v[0] <= x[0] && x[0] <= v[1] && v[2] <= x[1] && x[1] <= v[3];
                        if inside {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            }
        }
    }

    /// Values at cell centroids.
    pub fn on_cells(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.centroids().into_iter().map(|c| self.eval(c)).collect()
    }

    pub fn on_vertices(&self, mesh: &Mesh) -> NodalFunction {
        NodalFunction::interpolate(mesh, |x| self.eval(x))
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

fn syntax(pos: usize, msg: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("expression syntax error at offset {pos}: {msg}"))
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(|c: char| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(syntax(self.pos, format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek() {
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Expr::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let start = {
            self.skip_ws();
            self.pos
        };
        match self.peek() {
            None => Err(syntax(start, "unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let len = self.src[start..]
                    .find(|c: char| !c.is_ascii_alphanumeric() && c != '_')
                    .unwrap_or(self.src.len() - start);
                let name = &self.src[start..start + len];
                self.pos += len;
                match name {
                    "x1" => return Ok(Expr::X1),
                    "x2" => return Ok(Expr::X2),
                    _ => {}
                }
                let (f, arity) = Func::lookup(name).ok_or_else(|| syntax(start, format!("unknown identifier '{name}'")))?;
                self.expect('(')?;
                let mut args = vec![self.expr()?];
                while self.eat(',') {
                    args.push(self.expr()?);
                }
                if args.len() != arity {
                    return Err(syntax(start, format!("{name} takes {arity} argument(s), got {}", args.len())));
                }
                self.expect(')')?;
                Ok(Expr::Call(f, args))
            }
            Some(c) => Err(syntax(start, format!("unexpected character '{c}'"))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut k = end + 1;
            if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                k += 1;
            }
            if k < bytes.len() && bytes[k].is_ascii_digit() {
                while k < bytes.len() && bytes[k].is_ascii_digit() {
                    k += 1;
                }
                end = k;
            }
        }
        let text = &self.src[start..end];
        let v: f64 = text.parse().map_err(|_| syntax(start, format!("bad number '{text}'")))?;
        self.pos = end;
        Ok(Expr::Num(v))
    }
}

pub fn parse_expression(s: &str) -> Result<Expr> {
    let mut p = Parser { src: s, pos: 0 };
    let e = p.expr()?;
    if let Some(c) = p.peek() {
        return Err(syntax(p.pos, format!("unexpected trailing '{c}'")));
    }
    Ok(e)
}
