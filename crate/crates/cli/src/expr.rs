//! Closed-form field expressions over the coordinates `x` and `y`.
//!
//! Grammar (EBNF; whitespace is insignificant):
//!
//! ```text
//! expr   = term , { ( "+" | "-" ) , term } ;
//! term   = unary , { ( "*" | "/" ) , unary } ;
//! unary  = ( "-" | "+" ) , unary | power ;
//! power  = atom , [ "^" , unary ] ;              (* right associative *)
//! atom   = number | "x" | "y" | "pi" | "e"
//!        | name , "(" , expr , { "," , expr } , ")"
//!        | "(" , expr , ")"
//!        | "|" , expr , "|" ;
//! name   = "abs" | "sqrt" | "exp" | "log" | "sin" | "cos" | "tanh" | "sign"
//!        | "min" | "max" | "step" ;
//! number = digit , { digit } , [ "." , { digit } ] , [ ( "e" | "E" ) , [ "+" | "-" ] , digit , { digit } ] ;
//! ```
//!
//! `-x^2` is `-(x^2)`; `min` and `max` take two or more arguments, the other
//! functions exactly one. `step(t)` is 1 for `t > 0` and 0 otherwise,
//! `sign(0) = 0`.

use std::fmt;

use freetrans_core::Point;

/// Nesting deeper than this is rejected (keeps recursion bounded).
pub const MAX_DEPTH: usize = 64;
pub const MAX_LEN: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExprError {
    /// Byte offset into the source.
    pub pos: usize,
    pub message: String,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at offset {}: {}", self.pos, self.message)
    }
}

impl std::error::Error for ExprError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Abs,
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Tanh,
    Sign,
    Step,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "sign" => Func::Sign,
            "step" => Func::Step,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn variadic(self) -> bool {
        matches!(self, Func::Min | Func::Max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, p: Point) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => p[0],
            Expr::Y => p[1],
            Expr::Neg(e) => -e.eval(p),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(p), b.eval(p));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(p);
                match f {
                    Func::Abs => a.abs(),
                    Func::Sqrt => a.sqrt(),
                    Func::Exp => a.exp(),
                    Func::Log => a.ln(),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tanh => a.tanh(),
                    Func::Sign => {
                        if a > 0.0 {
                            1.0
                        } else if a < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Step => (a > 0.0) as u8 as f64,
                    Func::Min => args[1..].iter().fold(a, |m, e| m.min(e.eval(p))),
                    Func::Max => args[1..].iter().fold(a, |m, e| m.max(e.eval(p))),
                }
            }
        }
    }

    /// Whether the expression mentions `y`.
    pub fn uses_y(&self) -> bool {
        match self {
            Expr::Y => true,
            Expr::Num(_) | Expr::X => false,
            Expr::Neg(e) => e.uses_y(),
            Expr::Bin(_, a, b) => a.uses_y() || b.uses_y(),
            Expr::Call(_, args) => args.iter().any(Expr::uses_y),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit()
            || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit))
        {
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
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ExprError {
                pos: start,
                message: format!("bad number {text:?}"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if b"+-*/^(),|".contains(&c) {
            out.push((i, Tok::Op(c as char)));
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(ExprError {
                pos: i,
                message: format!("unexpected character {ch:?}"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
    depth: usize,
}

impl Parser {
    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |t| t.0)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError {
            pos: self.pos(),
            message: message.into(),
        })
    }

    fn peek_op(&self) -> Option<char> {
        match self.toks.get(self.at) {
            Some((_, Tok::Op(c))) => Some(*c),
            _ => None,
        }
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek_op() == Some(op) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<(), ExprError> {
        if self.eat(op) {
            Ok(())
        } else {
            self.err(format!("expected '{op}'"))
        }
    }

    fn descend(&mut self) -> Result<(), ExprError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.err(format!("nesting deeper than {MAX_DEPTH}"));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        self.descend()?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek_op() {
                Some('+') => BinOp::Add,
                Some('-') => BinOp::Sub,
                _ => break,
            };
            self.at += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek_op() {
                Some('*') => BinOp::Mul,
                Some('/') => BinOp::Div,
                _ => break,
            };
            self.at += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        self.descend()?;
        let out = if self.eat('-') {
            Expr::Neg(Box::new(self.unary()?))
        } else if self.eat('+') {
            self.unary()?
        } else {
            self.power()?
        };
        self.depth -= 1;
        Ok(out)
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat('^') {
            Ok(Expr::Bin(
                BinOp::Pow,
                Box::new(base),
                Box::new(self.unary()?),
            ))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let Some((pos, tok)) = self.toks.get(self.at).cloned() else {
            return self.err("unexpected end of expression");
        };
        self.at += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Op('|') => {
                let e = self.expr()?;
                self.expect('|')?;
                Ok(Expr::Call(Func::Abs, vec![e]))
            }
            Tok::Op(c) => Err(ExprError {
                pos,
                message: format!("unexpected '{c}'"),
            }),
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::X),
                "y" => Ok(Expr::Y),
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "e" => Ok(Expr::Num(std::f64::consts::E)),
                _ => {
                    let Some(f) = Func::from_name(&name) else {
                        return Err(ExprError {
                            pos,
                            message: format!("unknown name {name:?}"),
                        });
                    };
                    self.expect('(')?;
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    match (f.variadic(), args.len()) {
                        (true, n) if n >= 2 => Ok(Expr::Call(f, args)),
                        (false, 1) => Ok(Expr::Call(f, args)),
                        (true, n) => Err(ExprError {
                            pos,
                            message: format!("{name} needs at least 2 arguments, got {n}"),
                        }),
                        (false, n) => Err(ExprError {
                            pos,
                            message: format!("{name} takes 1 argument, got {n}"),
                        }),
                    }
                }
            },
        }
    }
}

pub fn parse_expr(src: &str) -> Result<Expr, ExprError> {
    if src.len() > MAX_LEN {
        return Err(ExprError {
            pos: MAX_LEN,
            message: format!("expression longer than {MAX_LEN} bytes"),
        });
    }
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        at: 0,
        end: src.len(),
        depth: 0,
    };
    let e = p.expr()?;
    if p.at < p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: f64, y: f64) -> f64 {
        parse_expr(src).unwrap().eval([x, y])
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0, 0.0), 512.0);
        assert_eq!(ev("-x^2", 3.0, 0.0), -9.0);
        assert_eq!(ev("2^-1", 0.0, 0.0), 0.5);
        assert_eq!(ev("8 / 4 / 2", 0.0, 0.0), 1.0);
        assert_eq!(ev("1 - 2 - 3", 0.0, 0.0), -4.0);
    }

    #[test]
    fn bars_and_functions() {
        assert_eq!(ev("|x|^1.5", -4.0, 0.0), 8.0);
        assert_eq!(ev("|x| * |y|", -2.0, -3.0), 6.0);
        assert_eq!(ev("||x| - 1|", 0.5, 0.0), 0.5);
        assert_eq!(ev("max(x, y, 0.25)", 0.1, 0.2), 0.25);
        assert_eq!(ev("min(x, y)", 0.1, 0.2), 0.1);
        assert_eq!(ev("sign(x) + step(y)", -2.0, 0.0), -1.0);
        assert_eq!(ev("1.5e1 + 2E-1 + .5", 0.0, 0.0), 15.7);
        assert!((ev("sqrt(2) * cos(pi) + log(e)", 0.0, 0.0) + 2f64.sqrt() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_offsets() {
        for (src, pos) in [
            ("1 +", 3),
            ("foo(1)", 0),
            ("(x", 2),
            ("x y", 2),
            ("min(1)", 0),
            ("2 $ 3", 2),
            ("sin(1, 2)", 0),
        ] {
            let e = parse_expr(src).unwrap_err();
            assert_eq!(e.pos, pos, "{src}: {e}");
        }
        let deep = "(".repeat(200) + "1" + &")".repeat(200);
        assert!(parse_expr(&deep).unwrap_err().message.contains("nesting"));
    }

    #[test]
    fn y_usage() {
        assert!(!parse_expr("x^2 + 1").unwrap().uses_y());
        assert!(parse_expr("max(x, y)").unwrap().uses_y());
    }
}
