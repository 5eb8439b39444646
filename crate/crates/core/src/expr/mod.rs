//! Plant nonlinearities written as text expressions.
//!
//! Components are parsed once into immutable trees over the symbols
//! `x1..xn` (states) and `u1..um` (inputs). Evaluation is plain tree
//! walking; Jacobians use forward-mode differentiation over the same tree,
//! so they are exact up to rounding.

mod ast;
mod parse;

pub use ast::{Expr, Func};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("component {component}: syntax error at offset {position}: {message}")]
    Syntax {
        component: usize,
        position: usize,
        message: String,
    },
    #[error("component {component}: unknown symbol '{token}'")]
    UnknownSymbol { component: usize, token: String },
    #[error("component {component}: domain error: {message}")]
    Domain { component: usize, message: String },
    #[error("{what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Vector-valued nonlinearity `f(x, u)` with one tree per state component.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprVector<T> {
    components: Vec<Expr<T>>,
    state_dim: usize,
    input_dim: usize,
}

impl<T: Real> ExprVector<T> {
    /// Parses one expression per state component.
    pub fn parse<S: AsRef<str>>(texts: &[S], state_dim: usize, input_dim: usize) -> Result<Self, ExprError> {
        if texts.len() != state_dim {
            return Err(ExprError::Dimension {
                what: "expression list",
                expected: state_dim,
                got: texts.len(),
            });
        }
        let components = texts
            .iter()
            .enumerate()
            .map(|(i, s)| parse::parse_component(s.as_ref(), i, state_dim, input_dim))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            components,
            state_dim,
            input_dim,
        })
    }

    /// The identically-zero nonlinearity.
    pub fn zeros(state_dim: usize, input_dim: usize) -> Self {
        Self {
            components: vec![Expr::Const(T::zero()); state_dim],
            state_dim,
            input_dim,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn components(&self) -> &[Expr<T>] {
        &self.components
    }

    /// Prints each component in a form that parses back to the same tree.
    pub fn to_strings(&self) -> Vec<String> {
        self.components.iter().map(|e| e.to_string()).collect()
    }

    fn check_args(&self, x: &DVector<T>, u: &DVector<T>) -> Result<(), ExprError> {
        if x.len() != self.state_dim {
            return Err(ExprError::Dimension {
                what: "state vector",
                expected: self.state_dim,
                got: x.len(),
            });
        }
        if u.len() != self.input_dim {
            return Err(ExprError::Dimension {
                what: "input vector",
                expected: self.input_dim,
                got: u.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>, ExprError> {
        self.check_args(x, u)?;
        let mut out = DVector::zeros(self.state_dim);
        for (i, e) in self.components.iter().enumerate() {
            out[i] = eval(e, x, u).map_err(|message| ExprError::Domain { component: i, message })?;
        }
        Ok(out)
    }

    /// `∂f_i/∂x_j` at `(x, u)`, one row per component.
    pub fn jacobian(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DMatrix<T>, ExprError> {
        self.check_args(x, u)?;
        let n = self.state_dim;
        let mut jac = DMatrix::zeros(n, n);
        for (i, e) in self.components.iter().enumerate() {
            let d = eval_dual(e, x, u).map_err(|message| ExprError::Domain { component: i, message })?;
            jac.row_mut(i).copy_from(&d.grad.transpose());
        }
        Ok(jac)
    }

    /// Value and Jacobian in a single pass.
    pub fn evaluate_with_jacobian(
        &self,
        x: &DVector<T>,
        u: &DVector<T>,
    ) -> Result<(DVector<T>, DMatrix<T>), ExprError> {
        self.check_args(x, u)?;
        let n = self.state_dim;
        let mut val = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, n);
        for (i, e) in self.components.iter().enumerate() {
            let d = eval_dual(e, x, u).map_err(|message| ExprError::Domain { component: i, message })?;
            val[i] = d.value;
            jac.row_mut(i).copy_from(&d.grad.transpose());
        }
        Ok((val, jac))
    }
}

impl<T: Real> ExprVector<T> {
    /// Second derivatives `∂²f_i/∂x_j∂x_k`, one symmetric matrix per component.
    pub fn hessians(&self, x: &DVector<T>, u: &DVector<T>) -> Result<Vec<DMatrix<T>>, ExprError> {
        self.check_args(x, u)?;
        self.components
            .iter()
            .enumerate()
            .map(|(i, e)| {
                eval_second(e, x, u)
                    .map(|d| d.hess)
                    .map_err(|message| ExprError::Domain { component: i, message })
            })
            .collect()
    }
}

fn finite<T: Real>(v: T, what: &str) -> Result<T, String> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{what} produced a non-finite value"))
    }
}

fn eval<T: Real>(e: &Expr<T>, x: &DVector<T>, u: &DVector<T>) -> Result<T, String> {
    Ok(match e {
        Expr::Const(c) => *c,
        Expr::State(i) => x[*i],
        Expr::Input(j) => u[*j],
        Expr::Neg(a) => -eval(a, x, u)?,
        Expr::Add(a, b) => finite(eval(a, x, u)? + eval(b, x, u)?, "addition")?,
        Expr::Sub(a, b) => finite(eval(a, x, u)? - eval(b, x, u)?, "subtraction")?,
        Expr::Mul(a, b) => finite(eval(a, x, u)? * eval(b, x, u)?, "multiplication")?,
        Expr::Div(a, b) => {
            let den = eval(b, x, u)?;
            if den == T::zero() {
                return Err("division by zero".into());
            }
            finite(eval(a, x, u)? / den, "division")?
        }
        Expr::Pow(a, n) => {
            let base = eval(a, x, u)?;
            if *n < 0 && base == T::zero() {
                return Err("zero raised to a negative power".into());
            }
            finite(base.powi(*n), "power")?
        }
        Expr::Call(f, a) => finite(f.apply(eval(a, x, u)?), f.name())?,
    })
}

/// Value together with its gradient with respect to the states.
struct Dual<T> {
    value: T,
    grad: DVector<T>,
}

fn eval_dual<T: Real>(e: &Expr<T>, x: &DVector<T>, u: &DVector<T>) -> Result<Dual<T>, String> {
    let n = x.len();
    Ok(match e {
        Expr::Const(c) => Dual {
            value: *c,
            grad: DVector::zeros(n),
        },
        Expr::State(i) => {
            let mut grad = DVector::zeros(n);
            grad[*i] = T::one();
            Dual { value: x[*i], grad }
        }
        Expr::Input(j) => Dual {
            value: u[*j],
            grad: DVector::zeros(n),
        },
        Expr::Neg(a) => {
            let a = eval_dual(a, x, u)?;
            Dual {
                value: -a.value,
                grad: -a.grad,
            }
        }
        Expr::Add(a, b) => {
            let (a, b) = (eval_dual(a, x, u)?, eval_dual(b, x, u)?);
            Dual {
                value: finite(a.value + b.value, "addition")?,
                grad: a.grad + b.grad,
            }
        }
        Expr::Sub(a, b) => {
            let (a, b) = (eval_dual(a, x, u)?, eval_dual(b, x, u)?);
            Dual {
                value: finite(a.value - b.value, "subtraction")?,
                grad: a.grad - b.grad,
            }
        }
        Expr::Mul(a, b) => {
            let (a, b) = (eval_dual(a, x, u)?, eval_dual(b, x, u)?);
            Dual {
                value: finite(a.value * b.value, "multiplication")?,
                grad: a.grad * b.value + b.grad * a.value,
            }
        }
        Expr::Div(a, b) => {
            let (a, b) = (eval_dual(a, x, u)?, eval_dual(b, x, u)?);
            if b.value == T::zero() {
                return Err("division by zero".into());
            }
            let q = finite(a.value / b.value, "division")?;
            Dual {
                value: q,
                grad: (a.grad - b.grad * q) / b.value,
            }
        }
        Expr::Pow(a, k) => {
            let a = eval_dual(a, x, u)?;
            let k = *k;
            if k < 0 && a.value == T::zero() {
                return Err("zero raised to a negative power".into());
            }
            let value = finite(a.value.powi(k), "power")?;
            let slope = if k == 0 {
                T::zero()
            } else {
                T::lit(k as f64) * a.value.powi(k - 1)
            };
            Dual {
                value,
                grad: a.grad * slope,
            }
        }
        Expr::Call(f, a) => {
            let a = eval_dual(a, x, u)?;
            let value = finite(f.apply(a.value), f.name())?;
            Dual {
                value,
                grad: a.grad * f.derivative(a.value),
            }
        }
    })
}

/// Value, gradient and Hessian with respect to the states.
struct Dual2<T> {
    value: T,
    grad: DVector<T>,
    hess: DMatrix<T>,
}

impl<T: Real> Dual2<T> {
    fn constant(value: T, n: usize) -> Self {
        Self {
            value,
            grad: DVector::zeros(n),
            hess: DMatrix::zeros(n, n),
        }
    }

    /// Chain rule through a scalar map with first/second derivatives `d1`, `d2`.
    fn compose(self, value: T, d1: T, d2: T) -> Self {
        let outer = &self.grad * self.grad.transpose();
        Self {
            value,
            hess: self.hess * d1 + outer * d2,
            grad: self.grad * d1,
        }
    }
}

fn eval_second<T: Real>(e: &Expr<T>, x: &DVector<T>, u: &DVector<T>) -> Result<Dual2<T>, String> {
    let n = x.len();
    Ok(match e {
        Expr::Const(c) => Dual2::constant(*c, n),
        Expr::Input(j) => Dual2::constant(u[*j], n),
        Expr::State(i) => {
            let mut d = Dual2::constant(x[*i], n);
            d.grad[*i] = T::one();
            d
        }
        Expr::Neg(a) => {
            let a = eval_second(a, x, u)?;
            Dual2 {
                value: -a.value,
                grad: -a.grad,
                hess: -a.hess,
            }
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            let (a, b) = (eval_second(a, x, u)?, eval_second(b, x, u)?);
            if matches!(e, Expr::Add(..)) {
                Dual2 {
                    value: finite(a.value + b.value, "addition")?,
                    grad: a.grad + b.grad,
                    hess: a.hess + b.hess,
                }
            } else {
                Dual2 {
                    value: finite(a.value - b.value, "subtraction")?,
                    grad: a.grad - b.grad,
                    hess: a.hess - b.hess,
                }
            }
        }
        Expr::Mul(a, b) => {
            let (a, b) = (eval_second(a, x, u)?, eval_second(b, x, u)?);
            let cross = &a.grad * b.grad.transpose();
            Dual2 {
                value: finite(a.value * b.value, "multiplication")?,
                hess: &a.hess * b.value + &b.hess * a.value + &cross + cross.transpose(),
                grad: a.grad * b.value + b.grad * a.value,
            }
        }
        Expr::Div(a, b) => {
            let (a, b) = (eval_second(a, x, u)?, eval_second(b, x, u)?);
            if b.value == T::zero() {
                return Err("division by zero".into());
            }
            let r = T::one() / b.value;
            let recip = b.compose(r, -r * r, T::lit(2.0) * r * r * r);
            let cross = &a.grad * recip.grad.transpose();
            Dual2 {
                value: finite(a.value * r, "division")?,
                hess: &a.hess * recip.value + &recip.hess * a.value + &cross + cross.transpose(),
                grad: a.grad * recip.value + recip.grad * a.value,
            }
        }
        Expr::Pow(a, k) => {
            let a = eval_second(a, x, u)?;
            let k = *k;
            if k < 0 && a.value == T::zero() {
                return Err("zero raised to a negative power".into());
            }
            let kf = T::lit(k as f64);
            let value = finite(a.value.powi(k), "power")?;
            let d1 = if k == 0 { T::zero() } else { kf * a.value.powi(k - 1) };
            let d2 = if k == 0 || k == 1 {
                T::zero()
            } else {
                kf * T::lit((k - 1) as f64) * a.value.powi(k - 2)
            };
            a.compose(value, d1, d2)
        }
        Expr::Call(f, a) => {
            let a = eval_second(a, x, u)?;
            let v = a.value;
            let value = finite(f.apply(v), f.name())?;
            let d2 = match f {
                Func::Sin => -v.sin(),
                Func::Cos => -v.cos(),
                Func::Exp => v.exp(),
                Func::Tanh => {
                    let t = v.tanh();
                    -T::lit(2.0) * t * (T::one() - t * t)
                }
            };
            let d1 = f.derivative(v);
            a.compose(value, d1, d2)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn example_f() -> ExprVector<f64> {
        ExprVector::parse(&["x1^3", "-6*x1^5 - 6*x1^2*x2 - 2*x1^4 - 2*x1^3"], 2, 0).unwrap()
    }

    #[test]
    fn parses_cubic_monomial() {
        let f = ExprVector::<f64>::parse(&["x1^3"], 1, 0).unwrap();
        assert_eq!(f.components().len(), 1);
        assert_eq!(f.components()[0].polynomial_degree(), Some(3));
    }

    #[test]
    fn parses_four_term_polynomial() {
        let f = example_f();
        assert_eq!(f.components()[1].term_count(), 4);
        assert_eq!(f.components()[1].polynomial_degree(), Some(5));
    }

    #[test]
    fn out_of_range_symbol_is_named() {
        let err = ExprVector::<f64>::parse(&["x3", "0"], 2, 0).unwrap_err();
        assert_eq!(
            err,
            ExprError::UnknownSymbol {
                component: 0,
                token: "x3".into()
            }
        );
        let err = ExprVector::<f64>::parse(&["u1"], 1, 0).unwrap_err();
        assert!(matches!(err, ExprError::UnknownSymbol { .. }));
        let err = ExprVector::<f64>::parse(&["y"], 1, 0).unwrap_err();
        assert!(matches!(err, ExprError::UnknownSymbol { token, .. } if token == "y"));
    }

    #[test]
    fn implicit_multiplication_is_rejected() {
        let err = ExprVector::<f64>::parse(&["2x1"], 1, 0).unwrap_err();
        assert!(matches!(err, ExprError::Syntax { position: 1, .. }), "{err}");
    }

    #[test]
    fn fractional_exponent_is_rejected() {
        let err = ExprVector::<f64>::parse(&["x1^0.5"], 1, 0).unwrap_err();
        assert!(matches!(err, ExprError::Syntax { position: 3, .. }), "{err}");
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = ExprVector::<f64>::parse(&["x1 + * x1"], 1, 0).unwrap_err();
        assert!(matches!(err, ExprError::Syntax { position: 5, .. }), "{err}");
        let err = ExprVector::<f64>::parse(&["(x1 + 1"], 1, 0).unwrap_err();
        assert!(matches!(err, ExprError::Syntax { position: 7, .. }), "{err}");
        assert!(ExprVector::<f64>::parse(&[""], 1, 0).is_err());
        assert!(ExprVector::<f64>::parse(&["x1 $ 2"], 1, 0).is_err());
    }

    #[test]
    fn precedence_and_associativity() {
        let eval1 = |s: &str, x: f64| {
            ExprVector::<f64>::parse(&[s], 1, 0)
                .unwrap()
                .evaluate(&v(&[x]), &v(&[]))
                .unwrap()[0]
        };
        assert_eq!(eval1("-x1^2", 3.0), -9.0);
        assert_eq!(eval1("2*x1^2", 3.0), 18.0);
        assert_eq!(eval1("8/2/2", 0.0), 2.0);
        assert_eq!(eval1("8-2-2", 0.0), 4.0);
        assert_eq!(eval1("1+2*3", 0.0), 7.0);
        assert_eq!(eval1("x1^-1", 4.0), 0.25);
        assert_eq!(eval1("x1^(-2)", 2.0), 0.25);
        assert_eq!(eval1("2*-x1", 2.0), -4.0);
        assert_eq!(eval1("1.5e1", 0.0), 15.0);
    }

    #[test]
    fn example_values_at_point() {
        // independent evaluation of the polynomial
        let (x1, x2) = (0.1f64, 0.2f64);
        let f2 = -6.0 * x1.powi(5) - 6.0 * x1 * x1 * x2 - 2.0 * x1.powi(4) - 2.0 * x1.powi(3);
        let out = example_f().evaluate(&v(&[0.1, 0.2]), &v(&[])).unwrap();
        assert!((out[0] - 0.001).abs() < 1e-15);
        assert!((out[1] - f2).abs() < 1e-15);
        assert!((out[1] - (-0.01426)).abs() < 1e-9);
    }

    #[test]
    fn zero_at_origin_and_sine() {
        let out = example_f().evaluate(&v(&[0.0, 0.0]), &v(&[])).unwrap();
        assert_eq!(out, v(&[0.0, 0.0]));
        let s = ExprVector::<f64>::parse(&["sin(x1)"], 1, 0).unwrap();
        assert_eq!(s.evaluate(&v(&[0.0]), &v(&[])).unwrap()[0], 0.0);
    }

    #[test]
    fn division_by_zero_names_component() {
        let f = ExprVector::<f64>::parse(&["x1", "1/x2"], 2, 0).unwrap();
        let err = f.evaluate(&v(&[1.0, 0.0]), &v(&[])).unwrap_err();
        assert!(matches!(err, ExprError::Domain { component: 1, .. }));
        assert!(f.jacobian(&v(&[1.0, 0.0]), &v(&[])).is_err());
        let g = ExprVector::<f64>::parse(&["x1^-2"], 1, 0).unwrap();
        assert!(g.evaluate(&v(&[0.0]), &v(&[])).is_err());
    }

    #[test]
    fn wrong_argument_lengths() {
        let f = example_f();
        assert!(matches!(
            f.evaluate(&v(&[1.0]), &v(&[])),
            Err(ExprError::Dimension { .. })
        ));
        assert!(matches!(
            f.evaluate(&v(&[1.0, 2.0]), &v(&[1.0])),
            Err(ExprError::Dimension { .. })
        ));
    }

    #[test]
    fn power_rule() {
        let f = ExprVector::<f64>::parse(&["x1^3"], 1, 0).unwrap();
        let j = f.jacobian(&v(&[0.3]), &v(&[])).unwrap();
        assert!((j[(0, 0)] - 0.27).abs() < 1e-15);
    }

    #[test]
    fn example_jacobian_vanishes_at_origin() {
        let j = example_f().jacobian(&v(&[0.0, 0.0]), &v(&[])).unwrap();
        assert_eq!(j, DMatrix::zeros(2, 2));
    }

    #[test]
    fn example_jacobian_matches_central_differences() {
        let f = example_f();
        let x = v(&[0.3, 0.3]);
        let j = f.jacobian(&x, &v(&[])).unwrap();
        let h = 1e-6;
        for col in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[col] += h;
            xm[col] -= h;
            let fd = (f.evaluate(&xp, &v(&[])).unwrap() - f.evaluate(&xm, &v(&[])).unwrap()) / (2.0 * h);
            for row in 0..2 {
                assert!((j[(row, col)] - fd[row]).abs() < 1e-8, "({row},{col})");
            }
        }
        // closed form of entry (2,1): -30 x1^4 - 12 x1 x2 - 8 x1^3 - 6 x1^2
        let expected = -30.0 * 0.3f64.powi(4) - 12.0 * 0.09 - 8.0 * 0.027 - 6.0 * 0.09;
        assert!((j[(1, 0)] - expected).abs() < 1e-13);
    }

    #[test]
    fn inputs_are_held_constant_in_jacobian() {
        let f = ExprVector::<f64>::parse(&["x1*u1 + exp(u1)"], 1, 1).unwrap();
        let j = f.jacobian(&v(&[2.0]), &v(&[3.0])).unwrap();
        assert_eq!(j[(0, 0)], 3.0);
    }

    #[test]
    fn works_in_single_precision() {
        let f = ExprVector::<f32>::parse(&["x1^3", "tanh(x2)"], 2, 0).unwrap();
        let x = DVector::from_row_slice(&[0.5f32, 0.0]);
        let out = f.evaluate(&x, &DVector::zeros(0)).unwrap();
        assert_eq!(out[0], 0.125);
        let j = f.jacobian(&x, &DVector::zeros(0)).unwrap();
        assert_eq!(j[(1, 1)], 1.0);
    }

    #[test]
    fn hessians_match_jacobian_differences() {
        let f = ExprVector::<f64>::parse(
            &["x1^3*x2 - sin(x1*x2)", "exp(x2)/(2 + x1^2) + tanh(x1)^2 - cos(x2)"],
            2,
            0,
        )
        .unwrap();
        let x = v(&[0.4, -0.7]);
        let hs = f.hessians(&x, &v(&[])).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let dj = (f.jacobian(&xp, &v(&[])).unwrap() - f.jacobian(&xm, &v(&[])).unwrap()) / (2.0 * h);
            for i in 0..2 {
                for k in 0..2 {
                    assert!((hs[i][(k, j)] - dj[(i, k)]).abs() < 1e-7, "comp {i} ({k},{j})");
                }
            }
        }
        for hm in &hs {
            assert_eq!(hm, &hm.transpose());
        }
    }
}
