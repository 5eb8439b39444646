//! Continuous and discrete plant models, discretization, Lipschitz
//! estimation and a Runge–Kutta reference integrator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ExprError, ExprVector};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid region: {0}")]
    Region(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("no Lipschitz constant available for the continuous nonlinearity")]
    MissingLipschitz,
    #[error("state became non-finite at step {step}")]
    Divergence { step: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Axis-aligned box `lower_i <= x_i <= upper_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion<T> {
    lower: DVector<T>,
    upper: DVector<T>,
}

impl<T: Real> BoxRegion<T> {
    pub fn new(lower: DVector<T>, upper: DVector<T>) -> Result<Self, ModelError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(ModelError::Region(format!(
                "bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for i in 0..lower.len() {
            if !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(ModelError::Region(format!("axis {} is unbounded", i + 1)));
            }
            if lower[i] >= upper[i] {
                return Err(ModelError::Region(format!(
                    "axis {}: lower {} is not below upper {}",
                    i + 1,
                    lower[i],
                    upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[-half_width, half_width]^n`.
    pub fn symmetric(n: usize, half_width: T) -> Result<Self, ModelError> {
        Self::new(
            DVector::from_element(n, -half_width),
            DVector::from_element(n, half_width),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<T> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<T> {
        &self.upper
    }

    pub fn contains(&self, x: &DVector<T>) -> bool {
        x.len() == self.dim() && (0..self.dim()).all(|i| x[i] >= self.lower[i] && x[i] <= self.upper[i])
    }

    /// Maps a point of the unit cube affinely onto the box.
    pub fn from_unit(&self, s: &DVector<T>) -> DVector<T> {
        DVector::from_fn(self.dim(), |i, _| {
            self.lower[i] + s[i] * (self.upper[i] - self.lower[i])
        })
    }
}

/// `ẋ = A x + f(x, u)`, `y = C x`, with disturbance map `B` and
/// performance output `z = H e`.
#[derive(Debug, Clone)]
pub struct ContinuousModel<T> {
    pub a: DMatrix<T>,
    pub c: DMatrix<T>,
    pub b: DMatrix<T>,
    pub h: DMatrix<T>,
    pub f: ExprVector<T>,
    pub region: BoxRegion<T>,
    pub gamma_c: Option<T>,
}

impl<T: Real> ContinuousModel<T> {
    pub fn new(
        a: DMatrix<T>,
        c: DMatrix<T>,
        b: DMatrix<T>,
        h: DMatrix<T>,
        f: ExprVector<T>,
        region: BoxRegion<T>,
        gamma_c: Option<T>,
    ) -> Result<Self, ModelError> {
        let m = Self {
            a,
            c,
            b,
            h,
            f,
            region,
            gamma_c,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.a.nrows();
        check_shapes(n, &self.a, &self.c, &self.b, &self.h)?;
        if self.f.state_dim() != n {
            return Err(ModelError::Dimension(format!(
                "f has {} components, A is {n}x{n}",
                self.f.state_dim()
            )));
        }
        if self.region.dim() != n {
            return Err(ModelError::Dimension(format!(
                "region has dimension {}, expected {n}",
                self.region.dim()
            )));
        }
        if let Some(g) = self.gamma_c {
            if !(g > T::zero()) || !g.is_finite() {
                return Err(ModelError::Parameter(format!("gamma_c must be positive, got {g}")));
            }
        }
        Ok(())
    }

    /// Right-hand side `A x + f(x, u)`.
    pub fn vector_field(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>, ModelError> {
        Ok(&self.a * x + self.f.evaluate(x, u)?)
    }
}

fn check_shapes<T: Real>(
    n: usize,
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    b: &DMatrix<T>,
    h: &DMatrix<T>,
) -> Result<(), ModelError> {
    if n == 0 || a.ncols() != n {
        return Err(ModelError::Dimension(format!(
            "A must be square and non-empty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if c.ncols() != n || c.nrows() == 0 {
        return Err(ModelError::Dimension(format!(
            "C is {}x{}, expected px{n}",
            c.nrows(),
            c.ncols()
        )));
    }
    if b.nrows() != n {
        return Err(ModelError::Dimension(format!(
            "B is {}x{}, expected {n}xq",
            b.nrows(),
            b.ncols()
        )));
    }
    if h.ncols() != n {
        return Err(ModelError::Dimension(format!(
            "H is {}x{}, expected rx{n}",
            h.nrows(),
            h.ncols()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Native,
    Euler,
    Taylor2,
}

/// Nonlinear part `F(x, u)` of a discrete-time model.
#[derive(Debug, Clone)]
pub enum DiscreteNonlinearity<T> {
    /// `scale · f(x, u)`; `scale = 1` for native models, `T` for Euler.
    Scaled { f: ExprVector<T>, scale: T },
    /// Second-order Taylor remainder
    /// `T f + (T²/2)[(A + J_f)(A x + f) − A² x]`.
    Taylor2 { f: ExprVector<T>, a: DMatrix<T>, step: T },
}

impl<T: Real> DiscreteNonlinearity<T> {
    pub fn expressions(&self) -> &ExprVector<T> {
        match self {
            Self::Scaled { f, .. } | Self::Taylor2 { f, .. } => f,
        }
    }

    pub fn evaluate(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>, ExprError> {
        match self {
            Self::Scaled { f, scale } => Ok(f.evaluate(x, u)? * *scale),
            Self::Taylor2 { f, a, step } => {
                let (fx, jac) = f.evaluate_with_jacobian(x, u)?;
                let drift = a * x + &fx;
                let curvature = (a + jac) * drift - a * (a * x);
                let half_sq = *step * *step / T::lit(2.0);
                Ok(fx * *step + curvature * half_sq)
            }
        }
    }

    pub fn jacobian(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DMatrix<T>, ExprError> {
        match self {
            Self::Scaled { f, scale } => Ok(f.jacobian(x, u)? * *scale),
            Self::Taylor2 { f, a, step } => {
                let (fx, jac) = f.evaluate_with_jacobian(x, u)?;
                let hess = f.hessians(x, u)?;
                let drift = a * x + &fx;
                let n = x.len();
                // row i of d(J_f)/dx applied to the drift
                let mut contracted = DMatrix::zeros(n, n);
                for (i, hi) in hess.iter().enumerate() {
                    contracted.row_mut(i).copy_from(&(hi * &drift).transpose());
                }
                let sum = a + &jac;
                let half_sq = *step * *step / T::lit(2.0);
                Ok(&jac * *step + (contracted + &sum * &sum - a * a) * half_sq)
            }
        }
    }
}

/// `x(k+1) = A_d x + F(x, u) + B_d w`, `y = C_d x`.
#[derive(Debug, Clone)]
pub struct DiscreteModel<T> {
    pub a_d: DMatrix<T>,
    pub c_d: DMatrix<T>,
    pub b_d: DMatrix<T>,
    pub h: DMatrix<T>,
    pub nonlinearity: DiscreteNonlinearity<T>,
    pub gamma_d: T,
    /// Sampling time in seconds, zero for native models.
    pub sample_time: T,
    pub provenance: Provenance,
    pub region: Option<BoxRegion<T>>,
}

impl<T: Real> DiscreteModel<T> {
    /// An inherently discrete-time model with `F = f`.
    #[allow(clippy::too_many_arguments)]
    pub fn native(
        a_d: DMatrix<T>,
        c_d: DMatrix<T>,
        b_d: DMatrix<T>,
        h: DMatrix<T>,
        f: ExprVector<T>,
        gamma_d: T,
        region: Option<BoxRegion<T>>,
    ) -> Result<Self, ModelError> {
        let m = Self {
            a_d,
            c_d,
            b_d,
            h,
            nonlinearity: DiscreteNonlinearity::Scaled { f, scale: T::one() },
            gamma_d,
            sample_time: T::zero(),
            provenance: Provenance::Native,
            region,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn state_dim(&self) -> usize {
        self.a_d.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.c_d.nrows()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.b_d.ncols()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.a_d.nrows();
        check_shapes(n, &self.a_d, &self.c_d, &self.b_d, &self.h)?;
        if self.nonlinearity.expressions().state_dim() != n {
            return Err(ModelError::Dimension("F does not match A_d".into()));
        }
        if !(self.gamma_d > T::zero()) || !self.gamma_d.is_finite() {
            return Err(ModelError::Parameter(format!(
                "gamma_d must be positive, got {}",
                self.gamma_d
            )));
        }
        let sampled = self.sample_time > T::zero();
        if sampled == (self.provenance == Provenance::Native) {
            return Err(ModelError::Parameter(
                "sample time must be positive exactly for discretized models".into(),
            ));
        }
        if let Some(r) = &self.region {
            if r.dim() != n {
                return Err(ModelError::Dimension("region does not match A_d".into()));
            }
        }
        Ok(())
    }

    /// One step of the plant recursion.
    pub fn step(&self, x: &DVector<T>, u: &DVector<T>, w: &DVector<T>) -> Result<DVector<T>, ExprError> {
        let mut next = &self.a_d * x + self.nonlinearity.evaluate(x, u)?;
        if !w.is_empty() {
            next += &self.b_d * w;
        }
        Ok(next)
    }
}

/// Euler model: `A_d = I + A T`, `F = T f`, `B_d = T B`, `γ_d = T γ_c`.
pub fn euler_discretize<T: Real>(m: &ContinuousModel<T>, sample_time: T) -> Result<DiscreteModel<T>, ModelError> {
    check_sample_time(sample_time)?;
    let gamma_c = m.gamma_c.ok_or(ModelError::MissingLipschitz)?;
    let n = m.state_dim();
    let out = DiscreteModel {
        a_d: DMatrix::identity(n, n) + &m.a * sample_time,
        c_d: m.c.clone(),
        b_d: &m.b * sample_time,
        h: m.h.clone(),
        nonlinearity: DiscreteNonlinearity::Scaled {
            f: m.f.clone(),
            scale: sample_time,
        },
        gamma_d: sample_time * gamma_c,
        sample_time,
        provenance: Provenance::Euler,
        region: Some(m.region.clone()),
    };
    out.validate()?;
    Ok(out)
}

/// Second-order Taylor model under zero-order hold. `γ_d` is estimated
/// numerically for the full nonlinear remainder over the model region.
pub fn taylor2_discretize<T: Real>(
    m: &ContinuousModel<T>,
    sample_time: T,
    grid_points_per_axis: usize,
) -> Result<DiscreteModel<T>, ModelError> {
    check_sample_time(sample_time)?;
    let n = m.state_dim();
    let half_sq = sample_time * sample_time / T::lit(2.0);
    let a_d = DMatrix::identity(n, n) + &m.a * sample_time + &m.a * &m.a * half_sq;
    let b_d = (DMatrix::identity(n, n) * sample_time + &m.a * half_sq) * &m.b;
    let nonlinearity = DiscreteNonlinearity::Taylor2 {
        f: m.f.clone(),
        a: m.a.clone(),
        step: sample_time,
    };
    let u0 = DVector::zeros(m.f.input_dim());
    let est = estimate_lipschitz_with(|x| nonlinearity.jacobian(x, &u0), &m.region, grid_points_per_axis)?;
    // a vanishing nonlinearity still needs a positive constant for the LMIs
    let gamma_d = est.gamma.max(T::lit(1e-12));
    let out = DiscreteModel {
        a_d,
        c_d: m.c.clone(),
        b_d,
        h: m.h.clone(),
        nonlinearity,
        gamma_d,
        sample_time,
        provenance: Provenance::Taylor2,
        region: Some(m.region.clone()),
    };
    out.validate()?;
    Ok(out)
}

fn check_sample_time<T: Real>(t: T) -> Result<(), ModelError> {
    if t > T::zero() && t.is_finite() {
        Ok(())
    } else {
        Err(ModelError::Parameter(format!(
            "sampling time must be positive, got {t}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate<T> {
    pub gamma: T,
    pub argmax: DVector<T>,
}

/// Golden-section iterations per coordinate during local refinement.
pub const REFINE_ITERATIONS: usize = 50;
const REFINE_SWEEPS: usize = 3;

/// Largest singular value of the state Jacobian over the box, with input
/// held at `u`. Dense grid search followed by coordinate-wise golden-section
/// ascent inside the best grid cell.
pub fn estimate_lipschitz<T: Real>(
    f: &ExprVector<T>,
    region: &BoxRegion<T>,
    grid_points_per_axis: usize,
    u: &DVector<T>,
) -> Result<LipschitzEstimate<T>, ModelError> {
    if region.dim() != f.state_dim() {
        return Err(ModelError::Dimension("region does not match f".into()));
    }
    estimate_lipschitz_with(|x| f.jacobian(x, u), region, grid_points_per_axis)
}

pub fn estimate_lipschitz_with<T: Real, J>(
    jacobian: J,
    region: &BoxRegion<T>,
    grid_points_per_axis: usize,
) -> Result<LipschitzEstimate<T>, ModelError>
where
    J: Fn(&DVector<T>) -> Result<DMatrix<T>, ExprError>,
{
    if grid_points_per_axis < 2 {
        return Err(ModelError::Parameter("need at least 2 grid points per axis".into()));
    }
    let n = region.dim();
    let norm_at = |x: &DVector<T>| -> Result<T, ModelError> { Ok(spectral_norm(&jacobian(x)?)) };

    let steps = T::lit((grid_points_per_axis - 1) as f64);
    let mut counter = vec![0usize; n];
    let mut best = T::zero();
    let mut best_x = region.from_unit(&DVector::zeros(n));
    let mut first = true;
    loop {
        let unit = DVector::from_fn(n, |i, _| T::lit(counter[i] as f64) / steps);
        let x = region.from_unit(&unit);
        let s = norm_at(&x)?;
        if first || s > best {
            best = s;
            best_x = x;
            first = false;
        }
        // mixed-radix increment
        let mut axis = 0;
        while axis < n {
            counter[axis] += 1;
            if counter[axis] < grid_points_per_axis {
                break;
            }
            counter[axis] = 0;
            axis += 1;
        }
        if axis == n {
            break;
        }
    }

    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let spacing = DVector::from_fn(n, |i, _| (region.upper()[i] - region.lower()[i]) / steps);
    let mut x = best_x.clone();
    let mut value = best;
    for _ in 0..REFINE_SWEEPS {
        for i in 0..n {
            let mut lo = (x[i] - spacing[i]).max(region.lower()[i]);
            let mut hi = (x[i] + spacing[i]).min(region.upper()[i]);
            let probe = |t: T| -> Result<T, ModelError> {
                let mut p = x.clone();
                p[i] = t;
                norm_at(&p)
            };
            let mut c = hi - (hi - lo) * inv_phi;
            let mut d = lo + (hi - lo) * inv_phi;
            let mut fc = probe(c)?;
            let mut fd = probe(d)?;
            for _ in 0..REFINE_ITERATIONS {
                if fc > fd {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - (hi - lo) * inv_phi;
                    fc = probe(c)?;
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + (hi - lo) * inv_phi;
                    fd = probe(d)?;
                }
            }
            let (t, ft) = if fc > fd { (c, fc) } else { (d, fd) };
            if ft > value {
                value = ft;
                x[i] = t;
            }
        }
    }
    Ok(LipschitzEstimate {
        gamma: value,
        argmax: x,
    })
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(T::zero(), |acc, &s| acc.max(s))
}

/// One sampling interval of classical RK4 with `substeps` equal steps.
pub fn rk4_interval<T: Real>(
    m: &ContinuousModel<T>,
    x: &DVector<T>,
    u: &DVector<T>,
    sample_time: T,
    substeps: usize,
) -> Result<DVector<T>, ModelError> {
    let h = sample_time / T::lit(substeps as f64);
    let half = h / T::lit(2.0);
    let sixth = h / T::lit(6.0);
    let two = T::lit(2.0);
    let mut x = x.clone();
    for _ in 0..substeps {
        let k1 = m.vector_field(&x, u)?;
        let k2 = m.vector_field(&(&x + &k1 * half), u)?;
        let k3 = m.vector_field(&(&x + &k2 * half), u)?;
        let k4 = m.vector_field(&(&x + &k3 * h), u)?;
        x += (k1 + k2 * two + k3 * two + k4) * sixth;
    }
    Ok(x)
}

/// Samples `x(kT)`, `k = 0..=steps`, of the continuous plant under a
/// piecewise-constant input. An empty `inputs` slice means `u ≡ 0`.
pub fn reference_integrate<T: Real>(
    m: &ContinuousModel<T>,
    x0: &DVector<T>,
    inputs: &[DVector<T>],
    sample_time: T,
    substeps: usize,
    steps: usize,
) -> Result<Vec<DVector<T>>, ModelError> {
    check_sample_time(sample_time)?;
    if substeps == 0 {
        return Err(ModelError::Parameter("substeps must be at least 1".into()));
    }
    if x0.len() != m.state_dim() {
        return Err(ModelError::Dimension(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            m.state_dim()
        )));
    }
    if !inputs.is_empty() && inputs.len() < steps {
        return Err(ModelError::Dimension(format!(
            "{} input samples for {steps} steps",
            inputs.len()
        )));
    }
    let zero_u = DVector::zeros(m.f.input_dim());
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0.clone());
    let mut x = x0.clone();
    for k in 0..steps {
        let u = inputs.get(k).unwrap_or(&zero_u);
        x = match rk4_interval(m, &x, u, sample_time, substeps) {
            Ok(next) => next,
            Err(ModelError::Expr(ExprError::Domain { .. })) => return Err(ModelError::Divergence { step: k + 1 }),
            Err(e) => return Err(e),
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Divergence { step: k + 1 });
        }
        out.push(x.clone());
    }
    Ok(out)
}
