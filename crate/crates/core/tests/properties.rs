use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use lipobs::example;
use lipobs::expr::ExprVector;
use lipobs::model::{euler_discretize, DiscreteModel};
use lipobs::observer::simulate_discrete;
use lipobs::synth::{build_thm2, build_thm4, lambda2_terms, psi1, H8Mode, QSpec};

fn model() -> DiscreteModel<f64> {
    euler_discretize(&example::continuous_model::<f64>(), example::SAMPLE_TIME).unwrap()
}

fn coords(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-10.0..10.0f64, n).prop_map(DVector::from_vec)
}

proptest! {
    #[test]
    fn lmi_blocks_are_symmetric(y in coords(8), q in 0.01..5.0f64, gamma in 1e-3..0.2f64) {
        let m = model();
        let q = QSpec::scaled_identity(2, q).unwrap();
        let mut problems = vec![build_thm2(&m.a_d, &m.c_d, &q).unwrap()];
        for mode in [H8Mode::Faithful, H8Mode::Tightened] {
            problems.push(build_thm4(&m.a_d, &m.c_d, &m.b_d, &m.h, &q, gamma, mode).unwrap());
        }
        for p in problems {
            let y = y.rows(0, p.num_coordinates()).into_owned();
            for c in &p.constraints {
                let f = c.evaluate(&y);
                prop_assert_eq!(&f, &f.transpose(), "{}", c.name);
            }
            let back = p.flatten(&p.unflatten(&y)).unwrap();
            prop_assert_eq!(back, y);
        }
    }

    #[test]
    fn printed_expressions_evaluate_identically(x1 in -1.0..1.0f64, x2 in -1.0..1.0f64) {
        let f = ExprVector::<f64>::parse(&example::NONLINEARITY, 2, 0).unwrap();
        let g = ExprVector::<f64>::parse(&f.to_strings(), 2, 0).unwrap();
        let x = DVector::from_vec(vec![x1, x2]);
        let u = DVector::zeros(0);
        let (a, b) = (f.evaluate(&x, &u).unwrap(), g.evaluate(&x, &u).unwrap());
        prop_assert!((a - b).amax() <= 1e-14);
    }

    #[test]
    fn psi1_decreases_with_lipschitz_constant(q in 0.01..10.0f64, g in 1e-4..1.0f64) {
        let q = QSpec::scaled_identity(2, q).unwrap();
        prop_assert!(psi1(&q, g).unwrap() > psi1(&q, g * 1.5).unwrap());
    }

    #[test]
    fn lambda2_is_affine_in_pbar(q in 0.01..5.0f64, g in 1e-3..0.5f64, a in 0.0..10.0f64, b in 0.0..10.0f64) {
        let q = QSpec::scaled_identity(2, q).unwrap();
        let t = lambda2_terms(&q, g, &DMatrix::identity(2, 2)).unwrap();
        let mid = t.block11(0.5 * (a + b));
        let avg = (t.block11(a) + t.block11(b)) * 0.5;
        prop_assert!((mid - avg).amax() <= 1e-12);
    }

    #[test]
    fn linear_error_follows_closed_loop_powers(l1 in -2.0..2.0f64, l2 in -2.0..2.0f64, e1 in -1.0..1.0f64, e2 in -1.0..1.0f64) {
        let mut cont = example::continuous_model::<f64>();
        cont.f = ExprVector::zeros(2, 0);
        let m = euler_discretize(&cont, example::SAMPLE_TIME).unwrap();
        let l = DMatrix::from_column_slice(2, 1, &[l1, l2]);
        let x0 = DVector::from_vec(vec![0.1, -0.1]);
        let e0 = DVector::from_vec(vec![e1, e2]);
        let run = simulate_discrete(&m, &l, &x0, &(&x0 - &e0), &[], &[], 20).unwrap();
        let acl = &m.a_d - &l * &m.c_d;
        let mut e = e0;
        for got in &run.e {
            prop_assert!((got - &e).amax() <= 1e-10 * (1.0 + e.amax()));
            e = &acl * e;
        }
    }
}
