//! The two-state benchmark plant used throughout the tests and the
//! `reproduce-example` command, together with the published design values
//! it is compared against.

use nalgebra::{DMatrix, DVector};

use crate::expr::ExprVector;
use crate::model::{BoxRegion, ContinuousModel};
use crate::scalar::Real;

pub const NONLINEARITY: [&str; 2] = ["x1^3", "-6*x1^5 - 6*x1^2*x2 - 2*x1^4 - 2*x1^3"];
pub const SAMPLE_TIME: f64 = 0.1;
/// Lipschitz constant quoted for the plant; taken as given.
pub const GAMMA_C: f64 = 0.6109;
pub const Q_SCALE: f64 = 0.1;
pub const H_SCALE: f64 = 0.25;
pub const REGION_HALF_WIDTH: f64 = 0.3;
pub const X0: [f64; 2] = [0.15, -0.2];
pub const DISTURBANCE_SIGMA: f64 = 0.01;
pub const STEPS: usize = 100;
pub const SEED: u64 = 1;
/// `Q` scale for the H∞ design. At `Q_SCALE` the gain LMI has no solution
/// in any mode.
pub const HINF_Q_SCALE: f64 = 1.0;
pub const SWEEP_TIMES: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
/// Simulated horizon of each sweep row, in seconds.
pub const SWEEP_DURATION: f64 = 10.0;
pub const SUBSTEPS: usize = 100;
pub const LIPSCHITZ_GRID: usize = 201;

/// Published results for comparison only.
pub mod published {
    pub const GAMMA_C_STAR: f64 = 0.67;
    pub const MU_STAR: f64 = 0.1308;
    pub const GAIN: [f64; 2] = [1.0497, 0.3588];
    pub const SETTLING_SECONDS: f64 = 3.0;
}

pub fn continuous_model<T: Real>() -> ContinuousModel<T> {
    let m = |r, c, xs: &[f64]| DMatrix::from_iterator(c, r, xs.iter().map(|&v| T::lit(v))).transpose();
    ContinuousModel::new(
        m(2, 2, &[0.0, 1.0, -1.0, -1.0]),
        m(1, 2, &[1.0, 0.0]),
        m(2, 1, &[1.0, 1.0]),
        DMatrix::identity(2, 2) * T::lit(H_SCALE),
        ExprVector::parse(&NONLINEARITY, 2, 0).expect("benchmark nonlinearity parses"),
        BoxRegion::symmetric(2, T::lit(REGION_HALF_WIDTH)).expect("benchmark region is valid"),
        Some(T::lit(GAMMA_C)),
    )
    .expect("benchmark model is consistent")
}

pub fn initial_state<T: Real>() -> DVector<T> {
    DVector::from_iterator(2, X0.iter().map(|&v| T::lit(v)))
}
