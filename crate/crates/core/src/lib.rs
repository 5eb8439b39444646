//! Robust H∞ observer synthesis for Lipschitz nonlinear discrete-time and
//! sampled-data systems via linear matrix inequalities.
//!
//! The library is generic over the scalar type through [`Real`]; the
//! aliases below fix it to `f64`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod example;
pub mod expr;
pub mod model;
pub mod observer;
pub mod scalar;
pub mod sdpcore;
pub mod synth;
pub mod verify;

pub use scalar::Real;

pub type ExprVector = expr::ExprVector<f64>;
pub type BoxRegion = model::BoxRegion<f64>;
pub type ContinuousModel = model::ContinuousModel<f64>;
pub type DiscreteModel = model::DiscreteModel<f64>;
pub type QSpec = synth::QSpec<f64>;
pub type LmiProblem = synth::LmiProblem<f64>;
pub type SolveReport = sdpcore::SolveReport<f64>;
pub type DesignOptions = observer::DesignOptions<f64>;
pub type DesignResult = observer::DesignResult<f64>;
pub type SimulationRun = observer::SimulationRun<f64>;
pub type SweepOptions = verify::SweepOptions<f64>;
pub type SweepRow = verify::SweepRow<f64>;
