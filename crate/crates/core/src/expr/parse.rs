//! Recursive-descent parser for component expressions.
//!
//! Precedence, tightest first: `^` (integer literal exponent), unary `-`,
//! `*` `/`, `+` `-`. Binary operators are left-associative.

use super::ast::{Expr, Func};
use super::ExprError;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Num(&'a str),
    Ident(&'a str),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok<'_> {
    fn describe(&self) -> String {
        match self {
            Tok::Num(s) | Tok::Ident(s) => format!("'{s}'"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str, component: usize) -> Result<Vec<(Tok<'_>, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // optional exponent, only when followed by a digit or a signed digit
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
                out.push((Tok::Num(&src[start..i]), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(&src[start..i]), start));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    component,
                    position: start,
                    message: format!("unexpected character '{ch}'"),
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok<'a>, usize)>,
    pos: usize,
    component: usize,
    state_dim: usize,
    input_dim: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok<'a> {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok<'a> {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax<R>(&self, message: impl Into<String>) -> Result<R, ExprError> {
        Err(ExprError::Syntax {
            component: self.component,
            position: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, want: Tok<'static>) -> Result<(), ExprError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.syntax(format!(
                "expected {}, found {}",
                want.describe(),
                self.peek().describe()
            ))
        }
    }

    fn expr<T: Real>(&mut self) -> Result<Expr<T>, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term<T: Real>(&mut self) -> Result<Expr<T>, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary<T: Real>(&mut self) -> Result<Expr<T>, ExprError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power<T: Real>(&mut self) -> Result<Expr<T>, ExprError> {
        let mut base = self.primary()?;
        while *self.peek() == Tok::Caret {
            self.bump();
            let n = self.exponent()?;
            base = Expr::Pow(Box::new(base), n);
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32, ExprError> {
        let parenthesised = *self.peek() == Tok::LParen;
        if parenthesised {
            self.bump();
        }
        let negative = *self.peek() == Tok::Minus;
        if negative {
            self.bump();
        }
        let at = self.offset();
        let n = match self.bump() {
            Tok::Num(text) => {
                if text.bytes().any(|b| !b.is_ascii_digit()) {
                    return Err(ExprError::Syntax {
                        component: self.component,
                        position: at,
                        message: format!("exponent '{text}' is not an integer literal"),
                    });
                }
                text.parse::<i32>().map_err(|_| ExprError::Syntax {
                    component: self.component,
                    position: at,
                    message: format!("exponent '{text}' out of range"),
                })?
            }
            other => {
                return Err(ExprError::Syntax {
                    component: self.component,
                    position: at,
                    message: format!("expected integer exponent, found {}", other.describe()),
                })
            }
        };
        if parenthesised {
            self.expect(Tok::RParen)?;
        }
        Ok(if negative { -n } else { n })
    }

    fn primary<T: Real>(&mut self) -> Result<Expr<T>, ExprError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(text) => match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Expr::Const(T::lit(v))),
                _ => Err(ExprError::Syntax {
                    component: self.component,
                    position: at,
                    message: format!("malformed number '{text}'"),
                }),
            },
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(name) {
                    self.expect(Tok::LParen)?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen)?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                self.symbol(name)
            }
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            other => Err(ExprError::Syntax {
                component: self.component,
                position: at,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }

    fn symbol<T: Real>(&self, name: &str) -> Result<Expr<T>, ExprError> {
        let unknown = || ExprError::UnknownSymbol {
            component: self.component,
            token: name.to_string(),
        };
        let (kind, digits) = name.split_at(1);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
            return Err(unknown());
        }
        let index: usize = digits.parse().map_err(|_| unknown())?;
        match kind {
            "x" if index <= self.state_dim => Ok(Expr::State(index - 1)),
            "u" if index <= self.input_dim => Ok(Expr::Input(index - 1)),
            _ => Err(unknown()),
        }
    }
}

pub(super) fn parse_component<T: Real>(
    src: &str,
    component: usize,
    state_dim: usize,
    input_dim: usize,
) -> Result<Expr<T>, ExprError> {
    let toks = lex(src, component)?;
    let mut p = Parser {
        toks,
        pos: 0,
        component,
        state_dim,
        input_dim,
    };
    if *p.peek() == Tok::End {
        return p.syntax("empty expression");
    }
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.syntax(format!("unexpected {}", p.peek().describe()));
    }
    Ok(e)
}
