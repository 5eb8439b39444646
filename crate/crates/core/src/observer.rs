//! Observer design from LMI solutions and simulation of the error
//! dynamics.

use std::time::Duration;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::ExprError;
use crate::model::{rk4_interval, ContinuousModel, DiscreteModel, ModelError, Provenance};
use crate::scalar::Real;
use crate::sdpcore::{
    minimize_scalar, solve_feasibility, ProbeRecord, Residual, SolveError, SolveReport, SolveStatus, SolverSettings,
};
use crate::synth::{self, H8Mode, QSpec, SynthError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObserverError {
    #[error("P is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("state became non-finite at step {step}")]
    Divergence { step: usize },
    #[error("disturbance has zero energy")]
    ZeroDisturbance,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("infeasible{}", .diagnostic.as_ref().map(|d| format!(": {d}")).unwrap_or_default())]
    Infeasible {
        diagnostic: Option<String>,
        /// Last bisection bracket, when the problem had an objective.
        bracket: Option<(f64, f64)>,
        /// Best scaled margin reached by the solver.
        margin: Option<f64>,
    },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Theorem {
    /// Feasibility with a fixed Lipschitz constant.
    One,
    /// Largest admissible Lipschitz constant.
    Two,
    /// Smallest ℓ₂ gain from `w` to `z = H e`.
    Four,
}

impl Theorem {
    pub fn number(self) -> u8 {
        match self {
            Theorem::One => 1,
            Theorem::Two => 2,
            Theorem::Four => 4,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Theorem::One),
            2 => Some(Theorem::Two),
            4 => Some(Theorem::Four),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignOptions<T> {
    /// Overrides the model's `γ_d` for theorems 1 and 4.
    pub gamma_d: Option<T>,
    pub mode: H8Mode,
    /// Theorem 4 only: first maximise `γ_d`, then minimise `μ` at `γ_d*`.
    pub sequential: bool,
    pub settings: SolverSettings,
    pub xi_bracket: (T, T),
    pub xi_tol: T,
    pub zeta_bracket: (T, T),
    pub zeta_tol: T,
}

impl<T: Real> Default for DesignOptions<T> {
    fn default() -> Self {
        Self {
            gamma_d: None,
            mode: H8Mode::Faithful,
            sequential: false,
            settings: SolverSettings::default(),
            xi_bracket: (T::one(), T::lit(1e4)),
            xi_tol: T::lit(1e-6),
            zeta_bracket: (T::zero(), T::lit(1e4)),
            zeta_tol: T::lit(1e-8),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics<T> {
    pub status: SolveStatus,
    pub iterations: usize,
    pub wall_time: Duration,
    pub margin: Option<T>,
    pub bracket: Option<(T, T)>,
    pub probes: Vec<ProbeRecord<T>>,
    pub below_feasible: Option<bool>,
}

impl<T: Real> From<&SolveReport<T>> for SolverDiagnostics<T> {
    fn from(r: &SolveReport<T>) -> Self {
        Self {
            status: r.status,
            iterations: r.iterations,
            wall_time: r.wall_time,
            margin: r.margin,
            bracket: r.bracket,
            probes: r.probes.clone(),
            below_feasible: r.below_feasible,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult<T> {
    pub theorem: Theorem,
    pub l: DMatrix<T>,
    pub p: DMatrix<T>,
    pub g: DMatrix<T>,
    pub epsilon: T,
    /// Lipschitz constant the design is certified for.
    pub gamma_d: T,
    pub gamma_d_star: Option<T>,
    pub xi_star: Option<T>,
    pub mu_star: Option<T>,
    pub zeta_star: Option<T>,
    pub mode: Option<H8Mode>,
    /// Tightened mode only.
    pub pbar: Option<T>,
    pub q: QSpec<T>,
    pub residuals: Vec<Residual<T>>,
    pub solver: SolverDiagnostics<T>,
}

impl<T: Real> DesignResult<T> {
    /// Decision values as named in the synthesis problems.
    pub fn assignment(&self) -> synth::Assignment<T> {
        let scalar = |v: T| DMatrix::from_element(1, 1, v);
        let mut a = synth::Assignment::new();
        a.insert("P".into(), self.p.clone());
        a.insert("G".into(), self.g.clone());
        a.insert("eps".into(), scalar(self.epsilon));
        for (name, value) in [("xi", self.xi_star), ("zeta", self.zeta_star), ("pbar", self.pbar)] {
            if let Some(v) = value {
                a.insert(name.into(), scalar(v));
            }
        }
        a
    }

    /// `A_d − L C_d`.
    pub fn closed_loop(&self, model: &DiscreteModel<T>) -> DMatrix<T> {
        &model.a_d - &self.l * &model.c_d
    }
}

/// Solves `P L = G` through a Cholesky factorisation of `P`.
pub fn gain_from<T: Real>(p: &DMatrix<T>, g: &DMatrix<T>) -> Result<DMatrix<T>, ObserverError> {
    if !p.is_square() || g.nrows() != p.nrows() {
        return Err(ObserverError::Dimension(format!(
            "P is {}x{}, G is {}x{}",
            p.nrows(),
            p.ncols(),
            g.nrows(),
            g.ncols()
        )));
    }
    let chol = Cholesky::new(synth::symmetrize(p)).ok_or(ObserverError::NotPositiveDefinite)?;
    Ok(chol.solve(g))
}

fn scalar_of<T: Real>(r: &SolveReport<T>, name: &str) -> Option<T> {
    r.assignment.get(name).map(|m| m[(0, 0)])
}

fn finish<T: Real>(
    theorem: Theorem,
    report: &SolveReport<T>,
    q: &QSpec<T>,
    gamma_d: T,
) -> Result<DesignResult<T>, DesignError> {
    let p = report.assignment["P"].clone();
    let g = report.assignment["G"].clone();
    let l = gain_from(&p, &g)?;
    Ok(DesignResult {
        theorem,
        l,
        p,
        g,
        epsilon: scalar_of(report, "eps").unwrap_or_else(T::zero),
        gamma_d,
        gamma_d_star: None,
        xi_star: None,
        mu_star: None,
        zeta_star: None,
        mode: None,
        pbar: scalar_of(report, "pbar"),
        q: q.clone(),
        residuals: report.residuals.clone(),
        solver: report.into(),
    })
}

fn unsuccessful<T: Real>(report: &SolveReport<T>, diagnostic: Option<String>) -> DesignError {
    match report.status {
        SolveStatus::Infeasible => DesignError::Infeasible {
            diagnostic,
            bracket: report.bracket.map(|(a, b)| (a.as_f64(), b.as_f64())),
            margin: report.margin.map(|m| m.as_f64()),
        },
        _ => DesignError::NumericalFailure(format!(
            "solver stopped after {} iterations without a certified answer",
            report.iterations
        )),
    }
}

fn design_thm2<T: Real>(
    model: &DiscreteModel<T>,
    q: &QSpec<T>,
    options: &DesignOptions<T>,
) -> Result<DesignResult<T>, DesignError> {
    let problem = synth::build_thm2(&model.a_d, &model.c_d, q)?;
    let (lo, hi) = options.xi_bracket;
    let report = minimize_scalar(&problem, lo, hi, options.xi_tol, &options.settings)?;
    if report.status != SolveStatus::ObjectiveOptimal {
        return Err(unsuccessful(&report, None));
    }
    let xi = report.objective_value.expect("optimal report carries a value");
    let gamma_star = T::one() / xi;
    let mut d = finish(Theorem::Two, &report, q, gamma_star)?;
    d.xi_star = Some(xi);
    d.gamma_d_star = Some(gamma_star);
    Ok(d)
}

/// Runs the synthesis pipeline for one theorem.
pub fn design<T: Real>(
    model: &DiscreteModel<T>,
    q: &QSpec<T>,
    theorem: Theorem,
    options: &DesignOptions<T>,
) -> Result<DesignResult<T>, DesignError> {
    model.validate().map_err(ObserverError::from)?;
    match theorem {
        Theorem::One => {
            let gamma = options.gamma_d.unwrap_or(model.gamma_d);
            let problem = synth::build_thm1(&model.a_d, &model.c_d, q, gamma)?;
            let report = solve_feasibility(&problem, &options.settings)?;
            if report.status != SolveStatus::Feasible {
                return Err(unsuccessful(&report, synth::thm1_conflict(q, gamma)));
            }
            finish(Theorem::One, &report, q, gamma)
        }
        Theorem::Two => design_thm2(model, q, options),
        Theorem::Four => {
            if model.b_d.ncols() == 0 || model.h.nrows() == 0 {
                return Err(ObserverError::Dimension("theorem 4 needs B_d and H".into()).into());
            }
            if options.mode == H8Mode::PaperLiteral && model.b_d.ncols() != model.state_dim() {
                return Err(SynthError::Mode {
                    mode: options.mode,
                    reason: format!("B_d must be {0}x{0}, got {0}x{1}", model.state_dim(), model.b_d.ncols()),
                }
                .into());
            }
            let gamma_star = if options.sequential {
                Some(
                    design_thm2(model, q, options)?
                        .gamma_d_star
                        .expect("theorem 2 sets gamma_d_star"),
                )
            } else {
                None
            };
            let gamma = gamma_star.or(options.gamma_d).unwrap_or(model.gamma_d);
            let problem = synth::build_thm4(&model.a_d, &model.c_d, &model.b_d, &model.h, q, gamma, options.mode)?;
            let (lo, hi) = options.zeta_bracket;
            let report = minimize_scalar(&problem, lo, hi, options.zeta_tol, &options.settings)?;
            if report.status != SolveStatus::ObjectiveOptimal {
                let diagnostic =
                    synth::thm4_conflict(q, gamma, &model.h, options.mode).or_else(|| synth::thm1_conflict(q, gamma));
                return Err(unsuccessful(&report, diagnostic));
            }
            let zeta = report.objective_value.expect("optimal report carries a value");
            let mut d = finish(Theorem::Four, &report, q, gamma)?;
            d.zeta_star = Some(zeta);
            d.mu_star = Some(zeta.sqrt());
            d.mode = Some(options.mode);
            d.gamma_d_star = gamma_star;
            Ok(d)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub final_error_norm: f64,
    /// First sample after which `‖e‖` stays below `settling_threshold`.
    pub settling_index: Option<usize>,
    /// `max(1% of ‖e(0)‖, 5·rms(w))`.
    pub settling_threshold: f64,
    /// Largest `‖e‖` over the last 20% of samples.
    pub steady_state_error: f64,
    pub empirical_gain: Option<f64>,
}

/// Trajectories at `k = 0..=steps`. `w[k]` is the disturbance applied on
/// the step from `k` to `k + 1`; the final entry is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun<T> {
    pub t: Vec<T>,
    pub x: Vec<DVector<T>>,
    pub xhat: Vec<DVector<T>>,
    pub e: Vec<DVector<T>>,
    pub y: Vec<DVector<T>>,
    pub z: Vec<DVector<T>>,
    pub w: Vec<DVector<T>>,
    pub metrics: RunMetrics,
}

impl<T: Real> SimulationRun<T> {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn error_norms(&self) -> Vec<T> {
        self.e.iter().map(|e| e.norm()).collect()
    }
}

fn rms_per_component<T: Real>(w: &[DVector<T>]) -> T {
    let count: usize = w.iter().map(|v| v.len()).sum();
    if count == 0 {
        return T::zero();
    }
    let energy = w.iter().fold(T::zero(), |acc, v| acc + v.norm_squared());
    (energy / T::lit(count as f64)).sqrt()
}

/// `max_{j ≥ k} ‖e(j)‖ ≤ threshold` for the smallest such `k`.
pub fn settling_index<T: Real>(norms: &[T], threshold: T) -> Option<usize> {
    let mut index = None;
    for (k, n) in norms.iter().enumerate().rev() {
        if *n <= threshold {
            index = Some(k);
        } else {
            break;
        }
    }
    index
}

pub fn steady_state_error<T: Real>(norms: &[T]) -> T {
    let start = (norms.len() as f64 * 0.8).floor() as usize;
    norms[start.min(norms.len().saturating_sub(1))..]
        .iter()
        .fold(T::zero(), |acc, v| acc.max(*v))
}

fn compute_metrics<T: Real>(e: &[DVector<T>], z: &[DVector<T>], w: &[DVector<T>], applied: usize) -> RunMetrics {
    let norms: Vec<T> = e.iter().map(|v| v.norm()).collect();
    let applied_w = &w[..applied.min(w.len())];
    let threshold = (norms[0] * T::lit(0.01)).max(rms_per_component(applied_w) * T::lit(5.0));
    let w_energy = applied_w.iter().fold(T::zero(), |acc, v| acc + v.norm_squared());
    let z_energy = z.iter().fold(T::zero(), |acc, v| acc + v.norm_squared());
    RunMetrics {
        final_error_norm: norms.last().map(|v| v.as_f64()).unwrap_or(0.0),
        settling_index: settling_index(&norms, threshold),
        settling_threshold: threshold.as_f64(),
        steady_state_error: steady_state_error(&norms).as_f64(),
        empirical_gain: (w_energy > T::zero()).then(|| (z_energy / w_energy).sqrt().as_f64()),
    }
}

fn expr_divergence(step: usize) -> impl Fn(ExprError) -> ObserverError {
    move |_| ObserverError::Divergence { step }
}

fn check_vec<T>(what: &str, v: &DVector<T>, n: usize) -> Result<(), ObserverError> {
    if v.len() != n {
        return Err(ObserverError::Dimension(format!(
            "{what} has length {}, expected {n}",
            v.len()
        )));
    }
    Ok(())
}

fn check_seq<T>(what: &str, seq: &[DVector<T>], dim: usize, steps: usize) -> Result<(), ObserverError> {
    if seq.is_empty() {
        return Ok(());
    }
    if seq.len() < steps {
        return Err(ObserverError::Dimension(format!(
            "{what} has {} samples for {steps} steps",
            seq.len()
        )));
    }
    if let Some(bad) = seq.iter().find(|v| v.len() != dim) {
        return Err(ObserverError::Dimension(format!(
            "{what} sample has length {}, expected {dim}",
            bad.len()
        )));
    }
    Ok(())
}

/// Plant and observer on the same discrete-time model. Empty `u_seq` or
/// `w_seq` mean zero input and zero disturbance.
#[allow(clippy::too_many_arguments)]
pub fn simulate_discrete<T: Real>(
    model: &DiscreteModel<T>,
    l: &DMatrix<T>,
    x0: &DVector<T>,
    xhat0: &DVector<T>,
    u_seq: &[DVector<T>],
    w_seq: &[DVector<T>],
    steps: usize,
) -> Result<SimulationRun<T>, ObserverError> {
    let n = model.state_dim();
    if steps == 0 {
        return Err(ObserverError::Parameter("steps must be at least 1".into()));
    }
    if l.shape() != (n, model.output_dim()) {
        return Err(ObserverError::Dimension(format!("L is {}x{}", l.nrows(), l.ncols())));
    }
    check_vec("x0", x0, n)?;
    check_vec("xhat0", xhat0, n)?;
    let m = model.nonlinearity.expressions().input_dim();
    check_seq("u", u_seq, m, steps)?;
    check_seq("w", w_seq, model.disturbance_dim(), steps)?;
    let zero_u = DVector::zeros(m);
    let zero_w = DVector::zeros(model.disturbance_dim());
    let dt = if model.sample_time > T::zero() {
        model.sample_time
    } else {
        T::one()
    };

    let mut run = SimulationRun {
        t: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        xhat: Vec::with_capacity(steps + 1),
        e: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        z: Vec::with_capacity(steps + 1),
        w: Vec::with_capacity(steps + 1),
        metrics: RunMetrics {
            final_error_norm: 0.0,
            settling_index: None,
            settling_threshold: 0.0,
            steady_state_error: 0.0,
            empirical_gain: None,
        },
    };
    let mut x = x0.clone();
    let mut xhat = xhat0.clone();
    for k in 0..=steps {
        let y = &model.c_d * &x;
        let e = &x - &xhat;
        run.t.push(dt * T::lit(k as f64));
        run.z.push(&model.h * &e);
        run.e.push(e);
        let w = if k < steps {
            w_seq.get(k).unwrap_or(&zero_w).clone()
        } else {
            zero_w.clone()
        };
        run.w.push(w.clone());
        if k < steps {
            let u = u_seq.get(k).unwrap_or(&zero_u);
            let next_x = model.step(&x, u, &w).map_err(expr_divergence(k + 1))?;
            let innovation = &y - &model.c_d * &xhat;
            let next_xhat = &model.a_d * &xhat
                + model.nonlinearity.evaluate(&xhat, u).map_err(expr_divergence(k + 1))?
                + l * innovation;
            run.x.push(std::mem::replace(&mut x, next_x));
            run.xhat.push(std::mem::replace(&mut xhat, next_xhat));
            if x.iter().chain(xhat.iter()).any(|v| !v.is_finite()) {
                return Err(ObserverError::Divergence { step: k + 1 });
            }
        } else {
            run.x.push(x.clone());
            run.xhat.push(xhat.clone());
        }
        run.y.push(y);
    }
    run.metrics = compute_metrics(&run.e, &run.z, &run.w, steps);
    Ok(run)
}

/// Plant integrated by RK4 between samples (`w ≡ 0`, `u ≡ 0`), observer
/// running the approximate discrete model on the sampled outputs.
pub fn simulate_sampled_data<T: Real>(
    cont: &ContinuousModel<T>,
    disc: &DiscreteModel<T>,
    l: &DMatrix<T>,
    x0: &DVector<T>,
    xhat0: &DVector<T>,
    steps: usize,
    substeps: usize,
) -> Result<SimulationRun<T>, ObserverError> {
    if disc.provenance == Provenance::Native {
        return Err(ObserverError::Parameter(
            "sampled-data runs need a discretized model".into(),
        ));
    }
    if cont.state_dim() != disc.state_dim() {
        return Err(ObserverError::Dimension(
            "continuous and discrete models differ in size".into(),
        ));
    }
    if steps == 0 || substeps == 0 {
        return Err(ObserverError::Parameter("steps and substeps must be at least 1".into()));
    }
    let n = disc.state_dim();
    if l.shape() != (n, disc.output_dim()) {
        return Err(ObserverError::Dimension(format!("L is {}x{}", l.nrows(), l.ncols())));
    }
    check_vec("x0", x0, n)?;
    check_vec("xhat0", xhat0, n)?;
    let dt = disc.sample_time;
    let u = DVector::zeros(cont.f.input_dim());
    let zero_w = DVector::zeros(disc.disturbance_dim());
    let mut run = SimulationRun {
        t: Vec::new(),
        x: Vec::new(),
        xhat: Vec::new(),
        e: Vec::new(),
        y: Vec::new(),
        z: Vec::new(),
        w: Vec::new(),
        metrics: compute_metrics::<T>(&[DVector::zeros(n)], &[], &[], 0),
    };
    let mut x = x0.clone();
    let mut xhat = xhat0.clone();
    for k in 0..=steps {
        let y = &cont.c * &x;
        let e = &x - &xhat;
        run.t.push(dt * T::lit(k as f64));
        run.z.push(&disc.h * &e);
        run.e.push(e);
        run.w.push(zero_w.clone());
        run.x.push(x.clone());
        run.xhat.push(xhat.clone());
        if k < steps {
            let innovation = &y - &disc.c_d * &xhat;
            xhat = &disc.a_d * &xhat
                + disc.nonlinearity.evaluate(&xhat, &u).map_err(expr_divergence(k + 1))?
                + l * innovation;
            x = match rk4_interval(cont, &x, &u, dt, substeps) {
                Ok(v) => v,
                Err(ModelError::Expr(_)) => return Err(ObserverError::Divergence { step: k + 1 }),
                Err(e) => return Err(e.into()),
            };
            if x.iter().chain(xhat.iter()).any(|v| !v.is_finite()) {
                return Err(ObserverError::Divergence { step: k + 1 });
            }
        }
        run.y.push(y);
    }
    run.metrics = compute_metrics(&run.e, &run.z, &run.w, steps);
    Ok(run)
}

/// `‖z‖₂ / ‖w‖₂` over the run.
pub fn empirical_l2_gain<T: Real>(run: &SimulationRun<T>) -> Result<T, ObserverError> {
    let w_energy = run.w.iter().fold(T::zero(), |acc, v| acc + v.norm_squared());
    if !(w_energy > T::zero()) {
        return Err(ObserverError::ZeroDisturbance);
    }
    let z_energy = run.z.iter().fold(T::zero(), |acc, v| acc + v.norm_squared());
    Ok((z_energy / w_energy).sqrt())
}

/// I.i.d. `N(0, σ²)` samples from a seeded ChaCha20 stream.
pub fn gaussian_disturbance<T: Real>(
    seed: u64,
    sigma: T,
    length: usize,
    dim: usize,
) -> Result<Vec<DVector<T>>, ObserverError> {
    if !(sigma >= T::zero()) || !sigma.is_finite() {
        return Err(ObserverError::Parameter(format!(
            "sigma must be nonnegative, got {sigma}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok((0..length)
        .map(|_| {
            DVector::from_fn(dim, |_, _| {
                let v: f64 = StandardNormal.sample(&mut rng);
                T::lit(v) * sigma
            })
        })
        .collect())
}
