//! LMI feasibility by a primal-dual interior-point method, scalar
//! minimisation by bisection, and an independent residual check.

mod bisect;
mod ipm;
pub mod linalg;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bisect::{bisect, Bisection, ProbeOutcome, ProbeRecord};

use crate::scalar::Real;
use crate::synth::{Assignment, LmiProblem, SynthError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("problem has an objective; use minimize_scalar")]
    HasObjective,
    #[error("problem has no objective")]
    NoObjective,
    #[error("invalid bracket [{lo}, {hi}] with tolerance {tol}")]
    Bracket { lo: f64, hi: f64, tol: f64 },
    #[error("missing variable '{0}'")]
    MissingVariable(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub condition_limit: f64,
    /// Relative stopping tolerance on residuals and duality gap.
    pub tolerance: f64,
    pub step_fraction: f64,
    /// Default `|y_k|` bound for coordinates without explicit bounds.
    pub variable_box: f64,
    /// Tolerance factor used when certifying solutions.
    pub check_tolerance: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            condition_limit: 1e14,
            tolerance: 1e-9,
            step_fraction: 0.95,
            variable_box: 1e6,
            check_tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    ObjectiveOptimal,
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_success(self) -> bool {
        matches!(self, SolveStatus::Feasible | SolveStatus::ObjectiveOptimal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual<T> {
    pub constraint: String,
    /// Smallest eigenvalue of the oriented block minus the margin.
    pub value: T,
    /// Acceptance threshold `−tolerance·max(1, max|F₀|)`.
    pub threshold: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport<T> {
    pub residuals: Vec<Residual<T>>,
    pub pass: bool,
}

impl<T: Real> CheckReport<T> {
    pub fn min_residual(&self) -> Option<T> {
        self.residuals.iter().map(|r| r.value).reduce(|a, b| a.min(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub status: SolveStatus,
    pub assignment: Assignment<T>,
    pub objective_value: Option<T>,
    pub residuals: Vec<Residual<T>>,
    pub iterations: usize,
    pub wall_time: Duration,
    /// Best scaled margin `t` reached; negative values indicate infeasibility.
    pub margin: Option<T>,
    /// Final `[infeasible, feasible]` objective bracket of a bisection.
    pub bracket: Option<(T, T)>,
    pub probes: Vec<ProbeRecord<T>>,
    /// Explicit probe at `objective − tol`: `Some(false)` when infeasible.
    pub below_feasible: Option<bool>,
}

impl<T: Real> SolveReport<T> {
    fn failed(status: SolveStatus, started: Instant) -> Self {
        Self {
            status,
            assignment: Assignment::new(),
            objective_value: None,
            residuals: Vec::new(),
            iterations: 0,
            wall_time: started.elapsed(),
            margin: None,
            bracket: None,
            probes: Vec::new(),
            below_feasible: None,
        }
    }
}

fn constant_scale<T: Real>(m: &DMatrix<T>) -> T {
    m.amax()
}

/// Translates a problem without objective into the standard block form.
fn to_sdp<T: Real>(p: &LmiProblem<T>, settings: &SolverSettings) -> ipm::Sdp<T> {
    let dim = p.num_coordinates();
    let mut blocks = Vec::new();
    for c in &p.constraints {
        let sign = match c.sense {
            crate::synth::Sense::PositiveDefinite => T::one(),
            crate::synth::Sense::NegativeDefinite => -T::one(),
        };
        let mut scale = constant_scale(&c.constant);
        if !(scale > T::zero()) {
            scale = c.coefficients.iter().fold(T::zero(), |acc, m| acc.max(m.amax()));
        }
        let scale = if scale > T::zero() { T::one() / scale } else { T::one() };
        let size = c.size();
        let eye = DMatrix::<T>::identity(size, size);
        let cmat = (&c.constant * sign - &eye * c.margin) * scale;
        let mut a: Vec<Option<DMatrix<T>>> = c
            .coefficients
            .iter()
            .map(|f| (f.amax() > T::zero()).then(|| f * (-sign * scale)))
            .collect();
        a.push(Some(eye));
        blocks.push(ipm::Block {
            c: crate::synth::symmetrize(&cmat),
            a,
            measured: true,
        });
    }
    let bx = T::lit(settings.variable_box);
    for var in &p.variables {
        for k in 0..var.kind.coordinates() {
            let idx = var.offset() + k;
            let lo = var.lower.unwrap_or(-bx);
            let hi = var.upper.unwrap_or(bx);
            for (bound, sign) in [(lo, T::one()), (hi, -T::one())] {
                // sign·(y − bound) − t ≥ 0, scaled by 1/max(1, |bound|)
                let s = T::one() / bound.abs().max(T::one());
                let mut a = vec![None; dim + 1];
                a[idx] = Some(DMatrix::from_element(1, 1, -sign * s));
                a[dim] = Some(DMatrix::from_element(1, 1, T::one()));
                blocks.push(ipm::Block {
                    c: DMatrix::from_element(1, 1, -sign * bound * s),
                    a,
                    measured: true,
                });
            }
        }
    }
    let mut a = vec![None; dim + 1];
    a[dim] = Some(DMatrix::from_element(1, 1, T::one()));
    blocks.push(ipm::Block {
        c: DMatrix::from_element(1, 1, T::one()),
        a,
        measured: false,
    });
    ipm::Sdp { blocks, dim }
}

/// Evaluates every constraint at `assignment` with a symmetric
/// tridiagonal eigen-solver, independent of the solver's routine.
pub fn check_solution<T: Real>(
    p: &LmiProblem<T>,
    assignment: &Assignment<T>,
    tolerance: T,
) -> Result<CheckReport<T>, SolveError> {
    let coords = p.flatten(assignment).map_err(|e| match e {
        SynthError::UnknownVariable(name) => SolveError::MissingVariable(name),
        other => SolveError::Synth(other),
    })?;
    Ok(check_coordinates(p, &coords, tolerance))
}

fn check_coordinates<T: Real>(p: &LmiProblem<T>, coords: &DVector<T>, tolerance: T) -> CheckReport<T> {
    let mut pass = true;
    let residuals = p
        .constraints
        .iter()
        .map(|c| {
            let f = c.oriented(coords);
            let lmin = SymmetricEigen::new(f).eigenvalues.min();
            let value = lmin - c.margin;
            let threshold = -tolerance * constant_scale(&c.constant).max(T::one());
            if !(value >= threshold) {
                pass = false;
            }
            Residual {
                constraint: c.name.clone(),
                value,
                threshold,
            }
        })
        .collect();
    CheckReport { residuals, pass }
}

fn within_bounds<T: Real>(p: &LmiProblem<T>, coords: &DVector<T>) -> bool {
    p.variables.iter().all(|v| {
        (0..v.kind.coordinates()).all(|k| {
            let x = coords[v.offset() + k];
            v.lower.is_none_or(|lo| x > lo) && v.upper.is_none_or(|hi| x < hi)
        })
    })
}

/// Most negative `λ_min − margin` over the principal sub-blocks that no
/// decision variable touches. Such a sub-block is the same for every
/// assignment, so a negative value proves infeasibility.
pub fn constant_block_conflict<T: Real>(p: &LmiProblem<T>) -> Option<(String, T)> {
    let mut worst: Option<(String, T)> = None;
    for c in &p.constraints {
        let idx: Vec<usize> = (0..c.size())
            .filter(|&i| c.coefficients.iter().all(|f| f.row(i).iter().all(|v| *v == T::zero())))
            .collect();
        if idx.is_empty() {
            continue;
        }
        let oriented = c.oriented(&DVector::zeros(p.num_coordinates()));
        let sub = oriented.select_rows(&idx).select_columns(&idx);
        let value = SymmetricEigen::new(sub).eigenvalues.min() - c.margin;
        if value < T::zero() && worst.as_ref().is_none_or(|(_, w)| value < *w) {
            worst = Some((c.name.clone(), value));
        }
    }
    worst
}

fn feasibility_core<T: Real>(
    p: &LmiProblem<T>,
    warm: Option<&DVector<T>>,
    settings: &SolverSettings,
) -> (SolveStatus, DVector<T>, T, usize) {
    if let Some((_, value)) = constant_block_conflict(p) {
        let y = warm.cloned().unwrap_or_else(|| DVector::zeros(p.num_coordinates()));
        return (SolveStatus::Infeasible, y, value, 0);
    }
    let sdp = to_sdp(p, settings);
    let warm = warm.filter(|w| w.len() == p.num_coordinates());
    let run = ipm::solve(&sdp, warm, settings);
    let tol = T::lit(settings.tolerance);
    let status = if run.t > T::zero() && within_bounds(p, &run.y) {
        if check_coordinates(p, &run.y, T::lit(settings.check_tolerance)).pass {
            SolveStatus::Feasible
        } else {
            SolveStatus::NumericalFailure
        }
    } else if run.outcome == ipm::Outcome::Converged || (run.primal_residual <= tol && run.upper < T::zero()) {
        SolveStatus::Infeasible
    } else {
        SolveStatus::NumericalFailure
    };
    (status, run.y, run.t, run.iterations)
}

/// Finds a strictly feasible point, or reports infeasibility.
pub fn solve_feasibility<T: Real>(p: &LmiProblem<T>, settings: &SolverSettings) -> Result<SolveReport<T>, SolveError> {
    solve_feasibility_from(p, None, settings)
}

/// As [`solve_feasibility`], starting the interior-point iteration from
/// the given coordinates.
pub fn solve_feasibility_from<T: Real>(
    p: &LmiProblem<T>,
    warm: Option<&DVector<T>>,
    settings: &SolverSettings,
) -> Result<SolveReport<T>, SolveError> {
    if p.objective.is_some() {
        return Err(SolveError::HasObjective);
    }
    let started = Instant::now();
    let (status, y, t, iterations) = feasibility_core(p, warm, settings);
    let check = check_coordinates(p, &y, T::lit(settings.check_tolerance));
    Ok(SolveReport {
        status,
        assignment: p.unflatten(&y),
        objective_value: None,
        residuals: check.residuals,
        iterations,
        wall_time: started.elapsed(),
        margin: Some(t),
        bracket: None,
        probes: Vec::new(),
        below_feasible: None,
    })
}

/// Minimises the objective scalar by bisection over `[lo, hi]`; each probe
/// is a feasibility solve with the scalar frozen.
pub fn minimize_scalar<T: Real>(
    p: &LmiProblem<T>,
    lo: T,
    hi: T,
    tol: T,
    settings: &SolverSettings,
) -> Result<SolveReport<T>, SolveError> {
    let objective = p.objective.as_ref().ok_or(SolveError::NoObjective)?;
    if !(lo < hi) || !(tol > T::zero()) {
        return Err(SolveError::Bracket {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
            tol: tol.as_f64(),
        });
    }
    let var = p
        .variable(&objective.variable)
        .ok_or_else(|| SolveError::MissingVariable(objective.variable.clone()))?
        .clone();
    let started = Instant::now();
    let mut warm: Option<DVector<T>> = None;
    let mut total_iterations = 0;
    let mut probe = |value: T| -> Result<ProbeOutcome<(Assignment<T>, T)>, SolveError> {
        if var.lower.is_some_and(|l| value <= l) || var.upper.is_some_and(|u| value >= u) {
            return Ok(ProbeOutcome::Infeasible);
        }
        let fixed = p.fix_scalar(&var.name, value)?;
        let (status, y, t, iters) = feasibility_core(&fixed, warm.as_ref(), settings);
        total_iterations += iters;
        Ok(match status {
            SolveStatus::Feasible => {
                warm = Some(y.clone());
                ProbeOutcome::Feasible((fixed.unflatten(&y), t))
            }
            SolveStatus::Infeasible => ProbeOutcome::Infeasible,
            _ => ProbeOutcome::Failure,
        })
    };

    let result = bisect(lo, hi, tol, &mut probe)?;
    let below = match &result {
        Bisection::Found { value, .. } => Some(matches!(probe(*value - tol)?, ProbeOutcome::Feasible(_))),
        _ => None,
    };

    let mut report = SolveReport::failed(SolveStatus::NumericalFailure, started);
    report.iterations = total_iterations;
    match result {
        Bisection::Found {
            value,
            witness: (assignment, t),
            bracket,
            probes,
        } => {
            let check = check_solution(p, &assignment, T::lit(settings.check_tolerance))?;
            report.status = if check.pass {
                SolveStatus::ObjectiveOptimal
            } else {
                SolveStatus::NumericalFailure
            };
            report.assignment = assignment;
            report.objective_value = Some(value);
            report.residuals = check.residuals;
            report.margin = Some(t);
            report.bracket = Some(bracket);
            report.probes = probes;
            report.below_feasible = below;
        }
        Bisection::UpperInfeasible { probes } => {
            report.status = SolveStatus::Infeasible;
            report.bracket = Some((lo, hi));
            report.probes = probes;
        }
        Bisection::Failure { bracket, probes } => {
            report.bracket = Some(bracket);
            report.probes = probes;
        }
    }
    report.wall_time = started.elapsed();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{LmiBuilder, Sense, VarKind};

    fn scalar_problem(constraints: &[(Sense, f64, f64)]) -> LmiProblem<f64> {
        // each entry: sense, coefficient of x, constant; block = (a·x + c)·I₂
        let mut b = LmiBuilder::new();
        b.variable("x", VarKind::Scalar);
        for (i, &(sense, a, c)) in constraints.iter().enumerate() {
            b.constraint(&format!("c{i}"), sense, move |env| {
                DMatrix::identity(2, 2) * (env.scalar("x") * a + env.konst_scalar(c))
            });
        }
        b.build()
    }

    #[test]
    fn simple_feasible() {
        let p = scalar_problem(&[(Sense::PositiveDefinite, 1.0, -1.0)]);
        let r = solve_feasibility(&p, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Feasible);
        assert!(r.assignment["x"][(0, 0)] > 1.0);
        assert!(check_solution(&p, &r.assignment, 1e-7).unwrap().pass);
    }

    #[test]
    fn contradictory_is_infeasible() {
        let p = scalar_problem(&[
            (Sense::PositiveDefinite, 1.0, -1.0),
            (Sense::PositiveDefinite, -1.0, 0.0),
        ]);
        let r = solve_feasibility(&p, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert!(r.margin.unwrap() < 0.0);
    }

    #[test]
    fn check_solution_residuals() {
        let mut b = LmiBuilder::<f64>::new();
        b.margin_scale(0.0).variable("P", VarKind::Symmetric(2));
        b.constraint("p", Sense::PositiveDefinite, |env| {
            env.var("P") - env.konst(&(DMatrix::identity(2, 2) * 0.5))
        });
        let p = b.build();
        let mut a = Assignment::new();
        a.insert("P".into(), DMatrix::identity(2, 2));
        let r = check_solution(&p, &a, 1e-7).unwrap();
        assert!((r.residuals[0].value - 0.5).abs() < 1e-15);
        assert!(r.pass);
        a.insert("P".into(), DMatrix::identity(2, 2) * 0.25);
        let r = check_solution(&p, &a, 1e-7).unwrap();
        assert!((r.residuals[0].value + 0.25).abs() < 1e-15);
        assert!(!r.pass);
        assert!(matches!(
            check_solution(&p, &Assignment::new(), 1e-7),
            Err(SolveError::MissingVariable(_))
        ));
    }

    #[test]
    fn minimize_simple_bound() {
        // x·I − 3I ⪰ 0, minimise x over (1, 100]
        let mut b = LmiBuilder::new();
        b.margin_scale(0.0).variable("x", VarKind::Scalar);
        b.constraint("c", Sense::PositiveDefinite, |env| {
            DMatrix::identity(2, 2) * (env.scalar("x") - env.konst_scalar(3.0))
        });
        b.minimize("x");
        let p = b.build();
        let r = minimize_scalar(&p, 1.0, 100.0, 1e-4, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::ObjectiveOptimal);
        let v = r.objective_value.unwrap();
        assert!((3.0..=3.0001).contains(&v), "{v}");
        assert_eq!(r.below_feasible, Some(false));
    }

    #[test]
    fn objective_problems_need_minimize() {
        let mut b = LmiBuilder::<f64>::new();
        b.variable("x", VarKind::Scalar).minimize("x");
        let p = b.build();
        assert_eq!(
            solve_feasibility(&p, &SolverSettings::default()),
            Err(SolveError::HasObjective)
        );
        let q = scalar_problem(&[]);
        assert!(matches!(
            minimize_scalar(&q, 0.0, 1.0, 1e-3, &SolverSettings::default()),
            Err(SolveError::NoObjective)
        ));
    }
}
