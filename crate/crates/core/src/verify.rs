//! Independent re-checks of finished designs and robustness studies.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::ExprVector;
use crate::model::{
    estimate_lipschitz, euler_discretize, spectral_norm, BoxRegion, ContinuousModel, DiscreteModel, ModelError,
};
use crate::observer::{
    design, simulate_sampled_data, DesignError, DesignOptions, DesignResult, ObserverError, Theorem,
};
use crate::scalar::Real;
use crate::synth::{psi1, psi2, QSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("no guaranteed margin: gamma* = {gamma_star} is below gamma = {gamma_actual}")]
    NoMargin { gamma_star: f64, gamma_actual: f64 },
    #[error("uncertainty Lipschitz estimate {estimate} exceeds the margin {margin}")]
    MarginViolated { estimate: f64, margin: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("model has no Lipschitz region")]
    MissingRegion,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// `λ_min(−[(A_d − LC_d)ᵀP(A_d − LC_d) − P + Q])`.
    pub lyapunov_margin: f64,
    /// Bound on `λ_max(P)` enforced by the design: `Ψ₂(ξ*)` or `Ψ₁(γ_d)`.
    pub psi_bound: f64,
    pub lambda_max_p: f64,
    /// `psi_bound − λ_max(P)`.
    pub psi_margin: f64,
    /// `−λ_min(Q) + λ_max(P)[2γ_d σ̄(A_d − LC_d) + γ_d²]`.
    pub cond17_value: f64,
    pub cond17_holds: bool,
    pub spectral_radius: f64,
    pub robustness_margin: Option<f64>,
    /// Lyapunov, Ψ and spectral-radius checks; `cond17` is informational.
    pub pass: bool,
}

pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> T {
    m.complex_eigenvalues()
        .iter()
        .map(|z| (z.re * z.re + z.im * z.im).sqrt())
        .fold(T::zero(), |acc, v| acc.max(v))
}

/// Recomputes the sufficient conditions from `P`, `L`, `Q` and `γ_d`.
pub fn verify_certificate<T: Real>(model: &DiscreteModel<T>, d: &DesignResult<T>) -> CertificateReport {
    let acl = d.closed_loop(model);
    let q = d.q.matrix();
    let lyap = acl.transpose() * &d.p * &acl - &d.p + q;
    let lyapunov_margin = -SymmetricEigen::new(crate::synth::symmetrize(&lyap)).eigenvalues.max();
    let lambda_max_p = SymmetricEigen::new(crate::synth::symmetrize(&d.p)).eigenvalues.max();
    let gamma = d.gamma_d;
    let psi_bound = match (d.theorem, d.xi_star) {
        (Theorem::Two, Some(xi)) => psi2(&d.q, xi).ok(),
        _ => psi1(&d.q, gamma).ok(),
    }
    .unwrap_or_else(T::zero);
    let two = T::lit(2.0);
    let cond17 = -d.q.lambda_min() + lambda_max_p * (two * gamma * spectral_norm(&acl) + gamma * gamma);
    let rho = spectral_radius(&acl);
    let robustness = d
        .gamma_d_star
        .filter(|g| *g >= model.gamma_d)
        .map(|g| (g - model.gamma_d).as_f64());
    let psi_margin = psi_bound - lambda_max_p;
    CertificateReport {
        lyapunov_margin: lyapunov_margin.as_f64(),
        psi_bound: psi_bound.as_f64(),
        lambda_max_p: lambda_max_p.as_f64(),
        psi_margin: psi_margin.as_f64(),
        cond17_value: cond17.as_f64(),
        cond17_holds: cond17 < T::zero(),
        spectral_radius: rho.as_f64(),
        robustness_margin: robustness,
        pass: lyapunov_margin > T::zero() && psi_margin > T::zero() && rho < T::one(),
    }
}

/// `Δγ = γ* − γ`.
pub fn robustness_margin<T: Real>(gamma_star: T, gamma_actual: T) -> Result<T, VerifyError> {
    if !(gamma_actual >= T::zero()) {
        return Err(VerifyError::Parameter(format!(
            "gamma must be nonnegative, got {gamma_actual}"
        )));
    }
    if gamma_star < gamma_actual {
        return Err(VerifyError::NoMargin {
            gamma_star: gamma_star.as_f64(),
            gamma_actual: gamma_actual.as_f64(),
        });
    }
    Ok(gamma_star - gamma_actual)
}

/// `V(k) = e(k)ᵀ P e(k)`.
pub fn lyapunov_values<T: Real>(p: &DMatrix<T>, errors: &[DVector<T>]) -> Vec<T> {
    errors.iter().map(|e| (e.transpose() * p * e)[(0, 0)]).collect()
}

/// Whether `V` strictly decreases at every step taken while `‖e‖ ≥ floor`
/// and the plant state lies in `region`.
pub fn strictly_decreasing<T: Real>(
    values: &[T],
    norms: &[T],
    states: &[DVector<T>],
    region: Option<&BoxRegion<T>>,
    floor: T,
) -> bool {
    for k in 0..values.len().saturating_sub(1) {
        if norms[k] < floor {
            break;
        }
        if region.is_some_and(|r| !r.contains(&states[k])) {
            break;
        }
        if !(values[k + 1] < values[k]) {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct StressOptions {
    pub trials: usize,
    pub steps: usize,
    pub seed: u64,
    pub grid_points_per_axis: usize,
    /// `‖e‖` below which the decrease test stops.
    pub error_floor: f64,
}

impl Default for StressOptions {
    fn default() -> Self {
        Self {
            trials: 100,
            steps: 200,
            seed: 0,
            grid_points_per_axis: 101,
            error_floor: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressSummary {
    pub trials: usize,
    pub uncertainty_lipschitz: f64,
    pub margin: f64,
    pub decreasing: usize,
    pub converged: usize,
    pub pass: bool,
}

fn random_point<T: Real>(rng: &mut ChaCha20Rng, region: &BoxRegion<T>) -> DVector<T> {
    let unit = DVector::from_fn(region.dim(), |_, _| T::lit(rng.random::<f64>()));
    region.from_unit(&unit)
}

/// Plant and observer both run `F + ΔF` with the unchanged gain.
pub fn uncertainty_stress_test<T: Real>(
    model: &DiscreteModel<T>,
    d: &DesignResult<T>,
    delta_f: &ExprVector<T>,
    options: &StressOptions,
) -> Result<StressSummary, VerifyError> {
    let region = model.region.as_ref().ok_or(VerifyError::MissingRegion)?;
    if delta_f.state_dim() != model.state_dim() {
        return Err(VerifyError::Parameter(
            "uncertainty does not match the model size".into(),
        ));
    }
    let gamma_star = d.gamma_d_star.unwrap_or(d.gamma_d);
    let margin = robustness_margin(gamma_star, model.gamma_d)?;
    let u = DVector::zeros(delta_f.input_dim());
    let estimate = estimate_lipschitz(delta_f, region, options.grid_points_per_axis, &u)?.gamma;
    if estimate > margin {
        return Err(VerifyError::MarginViolated {
            estimate: estimate.as_f64(),
            margin: margin.as_f64(),
        });
    }
    let step = |x: &DVector<T>| -> Result<DVector<T>, ObserverError> {
        let f = model
            .nonlinearity
            .evaluate(x, &u)
            .map_err(|e| ObserverError::Model(e.into()))?;
        let df = delta_f.evaluate(x, &u).map_err(|e| ObserverError::Model(e.into()))?;
        Ok(&model.a_d * x + f + df)
    };
    let mut rng = ChaCha20Rng::seed_from_u64(options.seed);
    let floor = T::lit(options.error_floor);
    let (mut decreasing, mut converged) = (0, 0);
    for _ in 0..options.trials {
        let mut x = random_point(&mut rng, region);
        let mut xhat = random_point(&mut rng, region);
        let mut errors = Vec::with_capacity(options.steps + 1);
        let mut states = Vec::with_capacity(options.steps + 1);
        for k in 0..=options.steps {
            errors.push(&x - &xhat);
            states.push(x.clone());
            if k < options.steps {
                let innovation = &model.c_d * (&x - &xhat);
                let next_xhat = step(&xhat)? + &d.l * innovation;
                x = step(&x)?;
                xhat = next_xhat;
                if x.iter().chain(xhat.iter()).any(|v| !v.is_finite()) {
                    return Err(ObserverError::Divergence { step: k + 1 }.into());
                }
            }
        }
        let norms: Vec<T> = errors.iter().map(|e| e.norm()).collect();
        let values = lyapunov_values(&d.p, &errors);
        if strictly_decreasing(&values, &norms, &states, Some(region), floor) {
            decreasing += 1;
        }
        if norms[options.steps] < norms[0] * T::lit(0.01) || norms[0] == T::zero() {
            converged += 1;
        }
    }
    Ok(StressSummary {
        trials: options.trials,
        uncertainty_lipschitz: estimate.as_f64(),
        margin: margin.as_f64(),
        decreasing,
        converged,
        pass: decreasing == options.trials && converged == options.trials,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions<T> {
    /// Simulated horizon in seconds; each row uses `round(duration / T)` steps.
    pub duration: T,
    pub substeps: usize,
    pub x0: DVector<T>,
    pub xhat0: DVector<T>,
    pub design: DesignOptions<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T> {
    pub sample_time: T,
    pub steps: usize,
    pub gamma_d_star: Option<T>,
    pub gamma_c_star: Option<T>,
    pub gain: Option<DMatrix<T>>,
    pub steady_state_error: Option<T>,
    pub error: Option<String>,
}

/// Euler design with `Q = T·I` (theorem 2) and a sampled-data run against
/// the RK4 plant for each sampling time.
pub fn practical_convergence_sweep<T: Real>(
    cont: &ContinuousModel<T>,
    t_list: &[T],
    options: &SweepOptions<T>,
) -> Result<Vec<SweepRow<T>>, VerifyError> {
    if t_list.is_empty() {
        return Err(VerifyError::Parameter("empty sampling-time list".into()));
    }
    if t_list.iter().any(|t| !(*t > T::zero()) || !t.is_finite()) {
        return Err(VerifyError::Parameter("sampling times must be positive".into()));
    }
    if t_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(VerifyError::Parameter("sampling times must be decreasing".into()));
    }
    let n = cont.state_dim();
    let mut rows = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let steps = (options.duration / t).round().as_f64().max(1.0) as usize;
        let mut row = SweepRow {
            sample_time: t,
            steps,
            gamma_d_star: None,
            gamma_c_star: None,
            gain: None,
            steady_state_error: None,
            error: None,
        };
        let outcome = (|| -> Result<(), String> {
            let disc = euler_discretize(cont, t).map_err(|e| e.to_string())?;
            let q = QSpec::scaled_identity(n, t).map_err(|e| e.to_string())?;
            let d = design(&disc, &q, Theorem::Two, &options.design).map_err(|e: DesignError| e.to_string())?;
            row.gamma_d_star = d.gamma_d_star;
            row.gamma_c_star = d.gamma_d_star.map(|g| g / t);
            let run = simulate_sampled_data(cont, &disc, &d.l, &options.x0, &options.xhat0, steps, options.substeps)
                .map_err(|e| e.to_string())?;
            row.gain = Some(d.l);
            row.steady_state_error = Some(T::lit(run.metrics.steady_state_error));
            Ok(())
        })();
        row.error = outcome.err();
        rows.push(row);
    }
    Ok(rows)
}

/// Consecutive steady-state errors never grow by more than `allowance`
/// (relative). Rows without a value fail the check.
pub fn non_increasing_within<T: Real>(rows: &[SweepRow<T>], allowance: T) -> bool {
    rows.windows(2)
        .all(|w| match (w[0].steady_state_error, w[1].steady_state_error) {
            (Some(a), Some(b)) => b <= a * (T::one() + allowance),
            _ => false,
        })
        && rows.iter().all(|r| r.steady_state_error.is_some())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observer::SolverDiagnostics;
    use crate::sdpcore::SolveStatus;

    fn m(r: usize, c: usize, xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, xs)
    }

    fn linear_model(gamma_d: f64) -> DiscreteModel<f64> {
        DiscreteModel::native(
            m(2, 2, &[0.5, 0.1, 0.0, 0.4]),
            m(1, 2, &[1.0, 0.0]),
            m(2, 1, &[1.0, 0.0]),
            DMatrix::identity(2, 2),
            ExprVector::zeros(2, 0),
            gamma_d,
            Some(BoxRegion::symmetric(2, 1.0).unwrap()),
        )
        .unwrap()
    }

    fn result_with(l: DMatrix<f64>, p: DMatrix<f64>, q: f64, gamma: f64) -> DesignResult<f64> {
        DesignResult {
            theorem: Theorem::One,
            g: &p * &l,
            l,
            p,
            epsilon: 0.0,
            gamma_d: gamma,
            gamma_d_star: None,
            xi_star: None,
            mu_star: None,
            zeta_star: None,
            mode: None,
            pbar: None,
            q: QSpec::scaled_identity(2, q).unwrap(),
            residuals: vec![],
            solver: SolverDiagnostics {
                status: SolveStatus::Feasible,
                iterations: 0,
                wall_time: Default::default(),
                margin: None,
                bracket: None,
                probes: vec![],
                below_feasible: None,
            },
        }
    }

    #[test]
    fn margins() {
        assert!((robustness_margin(0.67f64, 0.6109).unwrap() - 0.0591).abs() < 1e-12);
        assert_eq!(robustness_margin(0.3, 0.3).unwrap(), 0.0);
        assert!(matches!(robustness_margin(0.2, 0.3), Err(VerifyError::NoMargin { .. })));
    }

    #[test]
    fn unstable_gain_fails() {
        let model = linear_model(0.01);
        // A_d − L C_d with L = [−0.7, 0]ᵀ has eigenvalues 1.2 and 0.4
        let d = result_with(m(2, 1, &[-0.7, 0.0]), DMatrix::identity(2, 2), 0.1, 0.01);
        let r = verify_certificate(&model, &d);
        assert!((r.spectral_radius - 1.2).abs() < 1e-12);
        assert!(!r.pass);
    }

    #[test]
    fn cond17_zero_gamma_limit() {
        let model = linear_model(1e-12);
        let l = m(2, 1, &[0.5, 0.0]);
        let acl = &model.a_d - &l * &model.c_d;
        // P from P = Aᵀ P A + Q by fixed-point iteration
        let q = DMatrix::identity(2, 2) * 0.3;
        let mut p = q.clone();
        for _ in 0..400 {
            p = acl.transpose() * &p * &acl + &q;
        }
        let d = result_with(l, p, 0.3, 1e-300);
        let r = verify_certificate(&model, &d);
        assert!((r.cond17_value + 0.3).abs() < 1e-12);
        assert!(r.cond17_holds);
        assert!(r.lyapunov_margin.abs() < 1e-10);
    }

    #[test]
    fn decreasing_check_respects_floor_and_region() {
        let states = vec![DVector::from_element(1, 0.0); 4];
        assert!(strictly_decreasing(
            &[3.0, 2.0, 1.0, 1.0],
            &[1.0, 1.0, 1e-12, 0.0],
            &states,
            None,
            1e-9
        ));
        assert!(!strictly_decreasing(
            &[3.0, 2.0, 2.0, 1.0],
            &[1.0; 4],
            &states,
            None,
            1e-9
        ));
        let outside = vec![DVector::from_element(1, 5.0); 4];
        let region = BoxRegion::symmetric(1, 1.0).unwrap();
        assert!(strictly_decreasing(
            &[1.0, 2.0, 3.0, 4.0],
            &[1.0; 4],
            &outside,
            Some(&region),
            1e-9
        ));
    }

    #[test]
    fn sweep_argument_checks() {
        let cont = crate::example::continuous_model::<f64>();
        let opts = SweepOptions {
            duration: 1.0,
            substeps: 10,
            x0: DVector::zeros(2),
            xhat0: DVector::zeros(2),
            design: DesignOptions::default(),
        };
        assert!(practical_convergence_sweep(&cont, &[0.1, 0.2], &opts).is_err());
        assert!(practical_convergence_sweep(&cont, &[0.1, 0.0], &opts).is_err());
        assert!(practical_convergence_sweep(&cont, &[], &opts).is_err());
    }

    #[test]
    fn monotone_with_allowance() {
        let row = |e: Option<f64>| SweepRow {
            sample_time: 1.0,
            steps: 1,
            gamma_d_star: None,
            gamma_c_star: None,
            gain: None,
            steady_state_error: e,
            error: None,
        };
        assert!(non_increasing_within(
            &[row(Some(1.0)), row(Some(1.04)), row(Some(0.5))],
            0.05
        ));
        assert!(!non_increasing_within(&[row(Some(1.0)), row(Some(1.06))], 0.05));
        assert!(!non_increasing_within(&[row(Some(1.0)), row(None)], 0.05));
    }
}
