//! Scalar bounds and LMI assembly for the observer synthesis problems.
//!
//! Every problem is stored as data: for each constraint a constant block
//! matrix plus one coefficient matrix per scalar decision coordinate. The
//! builders evaluate an affine block function twice per coordinate (once
//! with constants, once without) so coefficients are exact.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("mode {mode} not admissible: {reason}")]
    Mode { mode: H8Mode, reason: String },
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
}

/// Fixed weighting matrix `Q ≻ 0` with cached extreme eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct QSpec<T> {
    q: DMatrix<T>,
    lambda_min: T,
    lambda_max: T,
}

impl<T: Real> QSpec<T> {
    pub fn new(q: DMatrix<T>) -> Result<Self, SynthError> {
        if !q.is_square() || q.nrows() == 0 {
            return Err(SynthError::Dimension(format!("Q is {}x{}", q.nrows(), q.ncols())));
        }
        if q != q.transpose() {
            return Err(SynthError::Parameter("Q is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(q.clone()).eigenvalues;
        let lambda_min = eig.min();
        let lambda_max = eig.max();
        if !(lambda_min > T::zero()) {
            return Err(SynthError::Parameter(format!(
                "Q is not positive definite (smallest eigenvalue {lambda_min})"
            )));
        }
        Ok(Self {
            q,
            lambda_min,
            lambda_max,
        })
    }

    pub fn scaled_identity(n: usize, scale: T) -> Result<Self, SynthError> {
        Self::new(DMatrix::identity(n, n) * scale)
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn lambda_min(&self) -> T {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> T {
        self.lambda_max
    }
}

/// Reading of the off-diagonal block of the H∞ constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum H8Mode {
    /// `coeff12 · I`; only shape-consistent when `B_d` is square.
    PaperLiteral,
    /// `coeff12 · B_d`.
    Faithful,
    /// `coeff12 · B_d` with the constant Ψ₁ replaced by a decision
    /// variable `pbar` subject to `P ≺ pbar I`.
    Tightened,
}

impl H8Mode {
    pub const ALL: [H8Mode; 3] = [H8Mode::PaperLiteral, H8Mode::Faithful, H8Mode::Tightened];

    pub fn as_str(self) -> &'static str {
        match self {
            H8Mode::PaperLiteral => "paper_literal",
            H8Mode::Faithful => "faithful",
            H8Mode::Tightened => "tightened",
        }
    }
}

impl fmt::Display for H8Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Upper bound on `λ_max(P)` for a given Lipschitz constant.
pub fn psi1<T: Real>(q: &QSpec<T>, gamma_d: T) -> Result<T, SynthError> {
    if !(gamma_d > T::zero()) || !gamma_d.is_finite() {
        return Err(SynthError::Parameter(format!(
            "gamma_d must be positive, got {gamma_d}"
        )));
    }
    let lmax = q.lambda_max;
    let lmin = q.lambda_min;
    let ratio = lmin / gamma_d;
    let root = (lmax * lmax + ratio * ratio).sqrt();
    Ok((root - lmax) / (gamma_d + T::lit(2.0)))
}

/// Bound used when the Lipschitz constant is optimised through `ξ = 1/γ_d`.
pub fn psi2<T: Real>(q: &QSpec<T>, xi: T) -> Result<T, SynthError> {
    if !(xi > T::one()) {
        return Err(SynthError::Parameter(format!("xi must exceed 1, got {xi}")));
    }
    Ok((q.lambda_min * xi - q.lambda_max) / T::lit(3.0))
}

/// Affine pieces of the H∞ constraint's first row, as functions of the
/// `λ_max(P)` bound `pbar`:
/// `block11 = base11 + slope11·pbar·I`, `coeff12 = base12 + slope12·pbar`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lambda2Terms<T> {
    pub base11: DMatrix<T>,
    pub slope11: T,
    pub base12: T,
    pub slope12: T,
}

impl<T: Real> Lambda2Terms<T> {
    pub fn block11(&self, pbar: T) -> DMatrix<T> {
        let n = self.base11.nrows();
        &self.base11 + DMatrix::identity(n, n) * (self.slope11 * pbar)
    }

    pub fn coeff12(&self, pbar: T) -> T {
        self.base12 + self.slope12 * pbar
    }
}

/// `Λ₂ = HᵀH − Q + γ_d(3·pbar + λ_max(Q))I` and
/// `coeff12 = ½[2(γ_d + 1)·pbar + λ_max(Q)]`.
pub fn lambda2_terms<T: Real>(q: &QSpec<T>, gamma_d: T, h: &DMatrix<T>) -> Result<Lambda2Terms<T>, SynthError> {
    let n = q.dim();
    if h.ncols() != n {
        return Err(SynthError::Dimension(format!(
            "H has {} columns, expected {n}",
            h.ncols()
        )));
    }
    let hth = symmetrize(&(h.transpose() * h));
    let half = T::lit(0.5);
    Ok(Lambda2Terms {
        base11: hth - &q.q + DMatrix::identity(n, n) * (gamma_d * q.lambda_max),
        slope11: T::lit(3.0) * gamma_d,
        base12: half * q.lambda_max,
        slope12: gamma_d + T::one(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Symmetric(usize),
    Rectangular(usize, usize),
    Scalar,
}

impl VarKind {
    pub fn coordinates(self) -> usize {
        match self {
            VarKind::Symmetric(n) => n * (n + 1) / 2,
            VarKind::Rectangular(r, c) => r * c,
            VarKind::Scalar => 1,
        }
    }

    pub fn shape(self) -> (usize, usize) {
        match self {
            VarKind::Symmetric(n) => (n, n),
            VarKind::Rectangular(r, c) => (r, c),
            VarKind::Scalar => (1, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable<T> {
    pub name: String,
    pub kind: VarKind,
    /// Elementwise bounds; only used for scalar variables.
    pub lower: Option<T>,
    pub upper: Option<T>,
    offset: usize,
}

impl<T> Variable<T> {
    pub fn offset(&self) -> usize {
        self.offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `F(x) ⪰ margin·I`
    PositiveDefinite,
    /// `F(x) ⪯ −margin·I`
    NegativeDefinite,
}

/// `F(x) = constant + Σ_k x_k · coefficients[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiConstraint<T> {
    pub name: String,
    pub sense: Sense,
    pub margin: T,
    pub constant: DMatrix<T>,
    pub coefficients: Vec<DMatrix<T>>,
}

impl<T: Real> LmiConstraint<T> {
    pub fn size(&self) -> usize {
        self.constant.nrows()
    }

    pub fn evaluate(&self, coords: &DVector<T>) -> DMatrix<T> {
        let mut m = self.constant.clone();
        for (k, coeff) in self.coefficients.iter().enumerate() {
            if coords[k] != T::zero() {
                m += coeff * coords[k];
            }
        }
        m
    }

    /// `F` for positive-definite constraints, `−F` for negative-definite
    /// ones, so that the requirement always reads `⪰ margin·I`.
    pub fn oriented(&self, coords: &DVector<T>) -> DMatrix<T> {
        match self.sense {
            Sense::PositiveDefinite => self.evaluate(coords),
            Sense::NegativeDefinite => -self.evaluate(coords),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    /// Scalar variable to minimise.
    pub variable: String,
}

pub type Assignment<T> = BTreeMap<String, DMatrix<T>>;

#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem<T> {
    pub variables: Vec<Variable<T>>,
    pub constraints: Vec<LmiConstraint<T>>,
    pub objective: Option<Objective>,
    /// Scalars substituted as constants, reported back with solutions.
    pub fixed: Vec<(String, T)>,
}

impl<T: Real> LmiProblem<T> {
    pub fn num_coordinates(&self) -> usize {
        self.variables.iter().map(|v| v.kind.coordinates()).sum()
    }

    pub fn variable(&self, name: &str) -> Option<&Variable<T>> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// Expands named values into the flat coordinate vector.
    pub fn flatten(&self, values: &Assignment<T>) -> Result<DVector<T>, SynthError> {
        let mut out = DVector::zeros(self.num_coordinates());
        for var in &self.variables {
            let m = values
                .get(&var.name)
                .ok_or_else(|| SynthError::UnknownVariable(var.name.clone()))?;
            if m.shape() != var.kind.shape() {
                return Err(SynthError::Dimension(format!(
                    "{} has shape {:?}, expected {:?}",
                    var.name,
                    m.shape(),
                    var.kind.shape()
                )));
            }
            for (k, (i, j)) in coordinate_entries(var.kind).enumerate() {
                out[var.offset + k] = m[(i, j)];
            }
        }
        Ok(out)
    }

    /// Named values, including fixed scalars, from a coordinate vector.
    pub fn unflatten(&self, coords: &DVector<T>) -> Assignment<T> {
        let mut out = Assignment::new();
        for var in &self.variables {
            out.insert(var.name.clone(), unit_value(var.kind, |k| coords[var.offset + k]));
        }
        for (name, value) in &self.fixed {
            out.insert(name.clone(), DMatrix::from_element(1, 1, *value));
        }
        out
    }

    /// Substitutes a scalar variable by a constant.
    pub fn fix_scalar(&self, name: &str, value: T) -> Result<LmiProblem<T>, SynthError> {
        let idx = self
            .variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| SynthError::UnknownVariable(name.to_string()))?;
        if self.variables[idx].kind != VarKind::Scalar {
            return Err(SynthError::Parameter(format!("{name} is not a scalar variable")));
        }
        let coord = self.variables[idx].offset;
        let constraints = self
            .constraints
            .iter()
            .map(|c| {
                let mut c = c.clone();
                let coeff = c.coefficients.remove(coord);
                c.constant += coeff * value;
                c
            })
            .collect();
        let mut variables = self.variables.clone();
        variables.remove(idx);
        let mut offset = 0;
        for v in &mut variables {
            v.offset = offset;
            offset += v.kind.coordinates();
        }
        let mut fixed = self.fixed.clone();
        fixed.push((name.to_string(), value));
        let objective = self.objective.clone().filter(|o| o.variable != name);
        Ok(LmiProblem {
            variables,
            constraints,
            objective,
            fixed,
        })
    }
}

fn coordinate_entries(kind: VarKind) -> Box<dyn Iterator<Item = (usize, usize)>> {
    match kind {
        VarKind::Symmetric(n) => Box::new((0..n).flat_map(move |i| (i..n).map(move |j| (i, j)))),
        VarKind::Rectangular(r, c) => Box::new((0..r).flat_map(move |i| (0..c).map(move |j| (i, j)))),
        VarKind::Scalar => Box::new(std::iter::once((0, 0))),
    }
}

fn unit_value<T: Real>(kind: VarKind, coord: impl Fn(usize) -> T) -> DMatrix<T> {
    let (r, c) = kind.shape();
    let mut m = DMatrix::zeros(r, c);
    for (k, (i, j)) in coordinate_entries(kind).enumerate() {
        let v = coord(k);
        m[(i, j)] = v;
        if matches!(kind, VarKind::Symmetric(_)) {
            m[(j, i)] = v;
        }
    }
    m
}

/// `(M + Mᵀ)/2`, exactly symmetric.
pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let half = T::lit(0.5);
    let mut out = m.clone();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// `[[b11, b12], [b12ᵀ, b22]]` with symmetrised diagonal blocks.
pub fn block2<T: Real>(b11: &DMatrix<T>, b12: &DMatrix<T>, b22: &DMatrix<T>) -> DMatrix<T> {
    let (n1, n2) = (b11.nrows(), b22.nrows());
    let mut m = DMatrix::zeros(n1 + n2, n1 + n2);
    m.view_mut((0, 0), (n1, n1)).copy_from(&symmetrize(b11));
    m.view_mut((0, n1), (n1, n2)).copy_from(b12);
    m.view_mut((n1, 0), (n2, n1)).copy_from(&b12.transpose());
    m.view_mut((n1, n1), (n2, n2)).copy_from(&symmetrize(b22));
    m
}

/// Variable values seen by a block function during assembly. In linear
/// mode constants evaluate to zero so that the result is the pure
/// coefficient of the active coordinate.
pub struct Env<'a, T> {
    values: &'a BTreeMap<String, DMatrix<T>>,
    with_constants: bool,
}

impl<T: Real> Env<'_, T> {
    pub fn var(&self, name: &str) -> &DMatrix<T> {
        &self.values[name]
    }

    pub fn scalar(&self, name: &str) -> T {
        self.values[name][(0, 0)]
    }

    pub fn konst(&self, m: &DMatrix<T>) -> DMatrix<T> {
        if self.with_constants {
            m.clone()
        } else {
            DMatrix::zeros(m.nrows(), m.ncols())
        }
    }

    pub fn konst_scalar(&self, v: T) -> T {
        if self.with_constants {
            v
        } else {
            T::zero()
        }
    }
}

/// Incremental builder for [`LmiProblem`].
pub struct LmiBuilder<T> {
    variables: Vec<Variable<T>>,
    constraints: Vec<LmiConstraint<T>>,
    objective: Option<Objective>,
    margin_scale: T,
}

/// Relative strictness margin: `margin = DEFAULT_MARGIN·(1 + ‖F₀‖_F)`.
pub const DEFAULT_MARGIN: f64 = 1e-9;

impl<T: Real> Default for LmiBuilder<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> LmiBuilder<T> {
    pub fn new() -> Self {
        Self {
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: None,
            margin_scale: T::lit(DEFAULT_MARGIN),
        }
    }

    /// Applies to constraints added afterwards.
    pub fn margin_scale(&mut self, scale: T) -> &mut Self {
        self.margin_scale = scale;
        self
    }

    fn next_offset(&self) -> usize {
        self.variables.iter().map(|v| v.kind.coordinates()).sum()
    }

    pub fn variable(&mut self, name: &str, kind: VarKind) -> &mut Self {
        self.bounded(name, kind, None, None)
    }

    pub fn bounded(&mut self, name: &str, kind: VarKind, lower: Option<T>, upper: Option<T>) -> &mut Self {
        let offset = self.next_offset();
        self.variables.push(Variable {
            name: name.to_string(),
            kind,
            lower,
            upper,
            offset,
        });
        self
    }

    pub fn minimize(&mut self, name: &str) -> &mut Self {
        self.objective = Some(Objective {
            variable: name.to_string(),
        });
        self
    }

    /// Adds a constraint from an affine block function.
    pub fn constraint<F>(&mut self, name: &str, sense: Sense, block: F) -> &mut Self
    where
        F: Fn(&Env<'_, T>) -> DMatrix<T>,
    {
        let zero: BTreeMap<String, DMatrix<T>> = self
            .variables
            .iter()
            .map(|v| {
                let (r, c) = v.kind.shape();
                (v.name.clone(), DMatrix::zeros(r, c))
            })
            .collect();
        let constant = block(&Env {
            values: &zero,
            with_constants: true,
        });
        let mut coefficients = Vec::with_capacity(self.next_offset());
        for var in &self.variables {
            for k in 0..var.kind.coordinates() {
                let mut values = zero.clone();
                values.insert(
                    var.name.clone(),
                    unit_value(var.kind, |j| if j == k { T::one() } else { T::zero() }),
                );
                coefficients.push(block(&Env {
                    values: &values,
                    with_constants: false,
                }));
            }
        }
        let margin = self.margin_scale * (T::one() + constant.norm());
        self.constraints.push(LmiConstraint {
            name: name.to_string(),
            sense,
            margin,
            constant,
            coefficients,
        });
        self
    }

    pub fn build(&mut self) -> LmiProblem<T> {
        let total = self.next_offset();
        let mut constraints = std::mem::take(&mut self.constraints);
        for c in &mut constraints {
            let size = c.size();
            c.coefficients.resize(total, DMatrix::zeros(size, size));
        }
        LmiProblem {
            variables: std::mem::take(&mut self.variables),
            constraints,
            objective: self.objective.take(),
            fixed: Vec::new(),
        }
    }
}

/// Floor placed on ε relative to `λ_min(Q)`.
pub const EPSILON_FLOOR: f64 = 1e-8;

fn check_pair<T: Real>(a_d: &DMatrix<T>, c_d: &DMatrix<T>, q: &QSpec<T>) -> Result<(), SynthError> {
    let n = a_d.nrows();
    if !a_d.is_square() || n == 0 {
        return Err(SynthError::Dimension(format!("A_d is {}x{}", a_d.nrows(), a_d.ncols())));
    }
    if c_d.ncols() != n || c_d.nrows() == 0 {
        return Err(SynthError::Dimension(format!(
            "C_d is {}x{}, expected px{n}",
            c_d.nrows(),
            c_d.ncols()
        )));
    }
    if q.dim() != n {
        return Err(SynthError::Dimension(format!(
            "Q is {0}x{0}, expected {n}x{n}",
            q.dim()
        )));
    }
    Ok(())
}

/// Variables `P`, `G`, `eps` and the Lyapunov constraint shared by every
/// theorem:
/// `[[P − Q − εI, A_dᵀP − C_dᵀGᵀ], [P A_d − G C_d, P]] ≻ 0`.
fn lyapunov_part<T: Real>(a_d: &DMatrix<T>, c_d: &DMatrix<T>, q: &QSpec<T>) -> LmiBuilder<T> {
    let n = a_d.nrows();
    let p_dim = c_d.nrows();
    let mut b = LmiBuilder::new();
    b.variable("P", VarKind::Symmetric(n))
        .variable("G", VarKind::Rectangular(n, p_dim))
        .bounded(
            "eps",
            VarKind::Scalar,
            Some(T::lit(EPSILON_FLOOR) * q.lambda_min()),
            None,
        );
    let a_d = a_d.clone();
    let c_d = c_d.clone();
    let qm = q.matrix().clone();
    b.constraint("lyapunov", Sense::PositiveDefinite, move |env| {
        let p = env.var("P");
        let g = env.var("G");
        let eye = DMatrix::<T>::identity(n, n);
        let b11 = p - env.konst(&qm) - eye * env.scalar("eps");
        let b12 = a_d.transpose() * p - c_d.transpose() * g.transpose();
        block2(&b11, &b12, p)
    });
    b
}

fn psi_constraint<T: Real, F>(b: &mut LmiBuilder<T>, n: usize, psi: F)
where
    F: Fn(&Env<'_, T>) -> T + 'static,
{
    b.constraint("psi_bound", Sense::PositiveDefinite, move |env| {
        let eye = DMatrix::<T>::identity(n, n) * psi(env);
        block2(&eye, env.var("P"), &eye)
    });
}

/// Feasibility problem with a fixed Lipschitz constant.
pub fn build_thm1<T: Real>(
    a_d: &DMatrix<T>,
    c_d: &DMatrix<T>,
    q: &QSpec<T>,
    gamma_d: T,
) -> Result<LmiProblem<T>, SynthError> {
    check_pair(a_d, c_d, q)?;
    let psi = psi1(q, gamma_d)?;
    let mut b = lyapunov_part(a_d, c_d, q);
    psi_constraint(&mut b, a_d.nrows(), move |env| env.konst_scalar(psi));
    Ok(b.build())
}

/// Minimise `ξ`; the admissible Lipschitz constant is `1/ξ*`.
pub fn build_thm2<T: Real>(a_d: &DMatrix<T>, c_d: &DMatrix<T>, q: &QSpec<T>) -> Result<LmiProblem<T>, SynthError> {
    check_pair(a_d, c_d, q)?;
    let mut b = lyapunov_part(a_d, c_d, q);
    b.bounded("xi", VarKind::Scalar, Some(T::one()), None);
    let (lmin, lmax) = (q.lambda_min(), q.lambda_max());
    let third = T::one() / T::lit(3.0);
    psi_constraint(&mut b, a_d.nrows(), move |env| {
        (env.scalar("xi") * lmin - env.konst_scalar(lmax)) * third
    });
    b.minimize("xi");
    Ok(b.build())
}

/// Minimise `ζ = μ²` for the disturbance-to-`H e` gain.
#[allow(clippy::too_many_arguments)]
pub fn build_thm4<T: Real>(
    a_d: &DMatrix<T>,
    c_d: &DMatrix<T>,
    b_d: &DMatrix<T>,
    h: &DMatrix<T>,
    q: &QSpec<T>,
    gamma_d: T,
    mode: H8Mode,
) -> Result<LmiProblem<T>, SynthError> {
    check_pair(a_d, c_d, q)?;
    let n = a_d.nrows();
    if b_d.nrows() != n || b_d.ncols() == 0 {
        return Err(SynthError::Dimension(format!(
            "B_d is {}x{}, expected {n}xq",
            b_d.nrows(),
            b_d.ncols()
        )));
    }
    if mode == H8Mode::PaperLiteral && b_d.ncols() != n {
        return Err(SynthError::Mode {
            mode,
            reason: format!("B_d must be {n}x{n}, got {n}x{}", b_d.ncols()),
        });
    }
    let psi = psi1(q, gamma_d)?;
    let terms = lambda2_terms(q, gamma_d, h)?;
    let qdim = b_d.ncols();

    let mut b = lyapunov_part(a_d, c_d, q);
    b.bounded("zeta", VarKind::Scalar, Some(T::zero()), None);
    if mode == H8Mode::Tightened {
        b.variable("pbar", VarKind::Scalar);
    }
    psi_constraint(&mut b, n, move |env| env.konst_scalar(psi));

    let b_d = b_d.clone();
    b.constraint("hinf", Sense::NegativeDefinite, move |env| {
        let p = env.var("P");
        let (block11, coeff12) = match mode {
            H8Mode::Tightened => {
                let pbar = env.scalar("pbar");
                let eye = DMatrix::<T>::identity(n, n);
                (
                    env.konst(&terms.base11) + eye * (terms.slope11 * pbar),
                    env.konst_scalar(terms.base12) + terms.slope12 * pbar,
                )
            }
            _ => (env.konst(&terms.block11(psi)), env.konst_scalar(terms.coeff12(psi))),
        };
        let block12 = match mode {
            H8Mode::PaperLiteral => DMatrix::identity(n, n) * coeff12,
            _ => &b_d * coeff12,
        };
        let block22 = b_d.transpose() * p * &b_d - DMatrix::identity(qdim, qdim) * env.scalar("zeta");
        block2(&block11, &block12, &block22)
    });
    if mode == H8Mode::Tightened {
        b.constraint("pbar_bound", Sense::PositiveDefinite, move |env| {
            DMatrix::<T>::identity(n, n) * env.scalar("pbar") - env.var("P")
        });
    }
    b.minimize("zeta");
    Ok(b.build())
}

/// Reasons a problem is infeasible that follow from the scalar data alone.
pub fn thm1_conflict<T: Real>(q: &QSpec<T>, gamma_d: T) -> Option<String> {
    let psi = psi1(q, gamma_d).ok()?;
    // P ≻ Q forces λ_max(P) > λ_max(Q), while the second LMI needs λ_max(P) < Ψ₁
    (psi <= q.lambda_max()).then(|| {
        format!(
            "Psi1 = {:.6e} does not exceed lambda_max(Q) = {:.6e}; P > Q and P < Psi1*I cannot both hold",
            psi.as_f64(),
            q.lambda_max().as_f64()
        )
    })
}

pub fn thm4_conflict<T: Real>(q: &QSpec<T>, gamma_d: T, h: &DMatrix<T>, mode: H8Mode) -> Option<String> {
    let terms = lambda2_terms(q, gamma_d, h).ok()?;
    // smallest admissible pbar: Ψ₁ when constant, otherwise λ_max(Q) < λ_max(P) < pbar
    let pbar = match mode {
        H8Mode::Tightened => q.lambda_max(),
        _ => psi1(q, gamma_d).ok()?,
    };
    let top = SymmetricEigen::new(terms.block11(pbar)).eigenvalues.max();
    (top >= T::zero()).then(|| {
        format!(
            "Lambda2 block has eigenvalue {:.6e} >= 0 at pbar = {:.6e}; the H-infinity LMI cannot be negative definite",
            top.as_f64(),
            pbar.as_f64()
        )
    })
}
