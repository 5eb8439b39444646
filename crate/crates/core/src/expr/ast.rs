use std::fmt;

use crate::scalar::Real;

/// Elementary functions accepted by the parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "tanh" => Some(Func::Tanh),
            _ => None,
        }
    }

    pub(crate) fn apply<T: Real>(self, v: T) -> T {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Tanh => v.tanh(),
        }
    }

    /// d/dv of the function, evaluated at `v`.
    pub(crate) fn derivative<T: Real>(self, v: T) -> T {
        match self {
            Func::Sin => v.cos(),
            Func::Cos => -v.sin(),
            Func::Exp => v.exp(),
            Func::Tanh => {
                let t = v.tanh();
                T::one() - t * t
            }
        }
    }
}

/// Expression tree node. State and input indices are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr<T> {
    Const(T),
    State(usize),
    Input(usize),
    Neg(Box<Expr<T>>),
    Add(Box<Expr<T>>, Box<Expr<T>>),
    Sub(Box<Expr<T>>, Box<Expr<T>>),
    Mul(Box<Expr<T>>, Box<Expr<T>>),
    Div(Box<Expr<T>>, Box<Expr<T>>),
    Pow(Box<Expr<T>>, i32),
    Call(Func, Box<Expr<T>>),
}

impl<T> Expr<T> {
    /// Visits every node in pre-order.
    pub fn walk(&self, visit: &mut impl FnMut(&Expr<T>)) {
        visit(self);
        match self {
            Expr::Const(_) | Expr::State(_) | Expr::Input(_) => {}
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.walk(visit),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.walk(visit);
                b.walk(visit);
            }
        }
    }

    /// Number of additive terms at the top level, e.g. `a - b + c` has 3.
    pub fn term_count(&self) -> usize {
        match self {
            Expr::Add(a, b) | Expr::Sub(a, b) => a.term_count() + b.term_count(),
            _ => 1,
        }
    }

    /// Largest polynomial degree if the tree is a polynomial in the states.
    pub fn polynomial_degree(&self) -> Option<u32> {
        match self {
            Expr::Const(_) | Expr::Input(_) => Some(0),
            Expr::State(_) => Some(1),
            Expr::Neg(a) => a.polynomial_degree(),
            Expr::Add(a, b) | Expr::Sub(a, b) => Some(a.polynomial_degree()?.max(b.polynomial_degree()?)),
            Expr::Mul(a, b) => Some(a.polynomial_degree()? + b.polynomial_degree()?),
            Expr::Pow(a, n) if *n >= 0 => Some(a.polynomial_degree()? * (*n as u32)),
            _ => None,
        }
    }
}

impl<T: Real> fmt::Display for Expr<T> {
    // Fully parenthesised so the output re-parses to the same tree shape.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < T::zero() {
                    write!(f, "(-{})", -*c)
                } else {
                    write!(f, "{}", c)
                }
            }
            Expr::State(i) => write!(f, "x{}", i + 1),
            Expr::Input(j) => write!(f, "u{}", j + 1),
            Expr::Neg(a) => write!(f, "(-{})", a),
            Expr::Add(a, b) => write!(f, "({} + {})", a, b),
            Expr::Sub(a, b) => write!(f, "({} - {})", a, b),
            Expr::Mul(a, b) => write!(f, "({} * {})", a, b),
            Expr::Div(a, b) => write!(f, "({} / {})", a, b),
            Expr::Pow(a, n) => write!(f, "({})^{}", a, n),
            Expr::Call(func, a) => write!(f, "{}({})", func.name(), a),
        }
    }
}
