//! End-to-end synthesis on the benchmark plant. Reference optima were
//! computed with an independent conic solver (Clarabel through cvxpy) on the
//! same LMIs and frozen here.

use lipobs::example;
use lipobs::model::{euler_discretize, DiscreteModel};
use lipobs::observer::{design, DesignError, DesignOptions, Theorem};
use lipobs::sdpcore::{
    check_solution, constant_block_conflict, minimize_scalar, solve_feasibility, SolveStatus, SolverSettings,
};
use lipobs::synth::{build_thm1, build_thm2, build_thm4, H8Mode, QSpec, SynthError};

const XI_STAR_ORACLE: f64 = 14.955916;
const MU_STAR_TIGHTENED_ORACLE: f64 = 4.982032;

fn model() -> DiscreteModel<f64> {
    euler_discretize(&example::continuous_model::<f64>(), example::SAMPLE_TIME).unwrap()
}

fn q(scale: f64) -> QSpec<f64> {
    QSpec::scaled_identity(2, scale).unwrap()
}

#[test]
fn theorem1_example_is_feasible_and_certified() {
    let m = model();
    let p = build_thm1(&m.a_d, &m.c_d, &q(example::Q_SCALE), m.gamma_d).unwrap();
    let r = solve_feasibility(&p, &SolverSettings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Feasible);
    assert!(r.margin.unwrap() > 0.0);
    assert!(check_solution(&p, &r.assignment, 1e-7).unwrap().pass);
}

#[test]
fn theorem2_matches_reference_optimum() {
    let m = model();
    let p = build_thm2(&m.a_d, &m.c_d, &q(example::Q_SCALE)).unwrap();
    let r = minimize_scalar(&p, 1.0, 1e4, 1e-6, &SolverSettings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::ObjectiveOptimal);
    let xi = r.objective_value.unwrap();
    assert!((xi - XI_STAR_ORACLE).abs() <= 1e-4, "xi* = {xi}");
    assert_eq!(r.below_feasible, Some(false));
    let (lo, hi) = r.bracket.unwrap();
    assert!(lo <= xi && xi <= hi && hi - lo <= 1e-6);
    assert!(check_solution(&p, &r.assignment, 1e-7).unwrap().pass);

    let below = p.fix_scalar("xi", XI_STAR_ORACLE * (1.0 - 1e-3)).unwrap();
    assert_ne!(
        solve_feasibility(&below, &SolverSettings::default()).unwrap().status,
        SolveStatus::Feasible
    );
}

#[test]
fn theorem4_tightened_matches_reference_optimum() {
    let m = model();
    let options = DesignOptions {
        mode: H8Mode::Tightened,
        ..DesignOptions::default()
    };
    let d = design(&m, &q(example::HINF_Q_SCALE), Theorem::Four, &options).unwrap();
    let mu = d.mu_star.unwrap();
    assert!(
        (mu - MU_STAR_TIGHTENED_ORACLE).abs() <= 1e-3 * MU_STAR_TIGHTENED_ORACLE,
        "mu* = {mu}"
    );
    let pbar = d.pbar.unwrap();
    let lmax = d.p.symmetric_eigenvalues().max();
    assert!(lmax < pbar);
}

#[test]
fn theorem4_faithful_is_infeasible_from_constant_block() {
    let m = model();
    let q1 = q(example::HINF_Q_SCALE);
    let p = build_thm4(&m.a_d, &m.c_d, &m.b_d, &m.h, &q1, m.gamma_d, H8Mode::Faithful).unwrap();
    let (name, violation) = constant_block_conflict(&p).expect("constant block is not negative definite");
    assert_eq!(name, "hinf");
    assert!(violation < 0.0);
    let options = DesignOptions::default();
    match design(&m, &q1, Theorem::Four, &options) {
        Err(DesignError::Infeasible { diagnostic, .. }) => assert!(diagnostic.unwrap().contains("Lambda2")),
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn theorem4_paper_literal_needs_square_disturbance_matrix() {
    let m = model();
    let err = build_thm4(&m.a_d, &m.c_d, &m.b_d, &m.h, &q(1.0), m.gamma_d, H8Mode::PaperLiteral).unwrap_err();
    assert!(matches!(
        err,
        SynthError::Mode {
            mode: H8Mode::PaperLiteral,
            ..
        }
    ));
}

#[test]
fn large_lipschitz_constant_is_infeasible() {
    let m = model();
    let options = DesignOptions {
        gamma_d: Some(10.0),
        ..DesignOptions::default()
    };
    assert!(matches!(
        design(&m, &q(1.0), Theorem::One, &options),
        Err(DesignError::Infeasible {
            diagnostic: Some(_),
            ..
        })
    ));
}
