//! Run configuration: one TOML file per experiment, matrices row-major.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use lipobs::expr::ExprVector;
use lipobs::model::{
    estimate_lipschitz, euler_discretize, taylor2_discretize, BoxRegion, ContinuousModel, DiscreteModel,
};
use lipobs::observer::{DesignOptions, Theorem};
use lipobs::sdpcore::SolverSettings;
use lipobs::synth::{H8Mode, QSpec};

use crate::error::CliError;

pub const DEFAULT_LIPSCHITZ_GRID: usize = 201;

pub const EXAMPLE_CONFIG: &str = include_str!("../config/example.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub discretization: DiscretizationConfig,
    pub design: DesignConfig,
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub state_dim: usize,
    #[serde(default)]
    pub input_dim: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    pub f: Vec<String>,
    pub region: RegionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_c: Option<f64>,
    /// Grid points per axis for Lipschitz estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_grid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Euler,
    Taylor2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub method: Method,
    #[serde(rename = "T")]
    pub sample_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QConfig {
    ScaledIdentity(f64),
    /// Row-major `n × n`.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub theorem: u8,
    #[serde(rename = "Q")]
    pub q: QConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_d: Option<f64>,
    #[serde(default = "default_mode")]
    pub h8_mode: H8Mode,
    #[serde(default)]
    pub sequential: bool,
}

fn default_mode() -> H8Mode {
    H8Mode::Faithful
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disturbance {
    None,
    Gaussian { sigma: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub steps: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    pub x0: Vec<f64>,
    pub xhat0: Vec<f64>,
    #[serde(default = "default_disturbance")]
    pub disturbance: Disturbance,
}

fn default_substeps() -> usize {
    100
}

fn default_disturbance() -> Disturbance {
    Disturbance::None
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories_path: Option<PathBuf>,
}

fn field(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{name}: {msg}"))
}

fn matrix(name: &str, data: &[f64], rows: Option<usize>, cols: Option<usize>) -> Result<DMatrix<f64>, CliError> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(field(name, "entries must be finite"));
    }
    let (r, c) = match (rows, cols) {
        (Some(r), Some(c)) => (r, c),
        (Some(r), None) if r > 0 && data.len().is_multiple_of(r) => (r, data.len() / r),
        (None, Some(c)) if c > 0 && data.len().is_multiple_of(c) => (data.len() / c, c),
        _ => {
            return Err(field(
                name,
                format!("{} entries do not form a matrix with the expected shape", data.len()),
            ))
        }
    };
    if r * c != data.len() {
        return Err(field(
            name,
            format!("expected {r}x{c} = {} entries, got {}", r * c, data.len()),
        ));
    }
    Ok(DMatrix::from_row_slice(r, c, data))
}

fn vector(name: &str, data: &[f64], n: usize) -> Result<DVector<f64>, CliError> {
    if data.len() != n {
        return Err(field(name, format!("expected {n} entries, got {}", data.len())));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(field(name, "entries must be finite"));
    }
    Ok(DVector::from_column_slice(data))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn example() -> Self {
        Self::parse(EXAMPLE_CONFIG).expect("embedded example config is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.continuous_model()?;
        if !(self.discretization.sample_time > 0.0 && self.discretization.sample_time.is_finite()) {
            return Err(field("discretization.T", "must be positive"));
        }
        let theorem = self.theorem()?;
        if theorem == Theorem::Four {
            if self.system.b.is_none() {
                return Err(field("system.B", "required for theorem 4"));
            }
            if self.system.h.is_none() {
                return Err(field("system.H", "required for theorem 4"));
            }
        }
        if let Some(g) = self.design.gamma_d {
            if !(g > 0.0 && g.is_finite()) {
                return Err(field("design.gamma_d", "must be positive"));
            }
        }
        self.q()?;
        let n = self.system.state_dim;
        vector("simulate.x0", &self.simulate.x0, n)?;
        vector("simulate.xhat0", &self.simulate.xhat0, n)?;
        if self.simulate.steps == 0 {
            return Err(field("simulate.steps", "must be at least 1"));
        }
        if self.simulate.substeps == 0 {
            return Err(field("simulate.substeps", "must be at least 1"));
        }
        if let Disturbance::Gaussian { sigma, .. } = self.simulate.disturbance {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(field("simulate.disturbance.gaussian.sigma", "must be nonnegative"));
            }
        }
        if self.system.lipschitz_grid.is_some_and(|g| g < 2) {
            return Err(field("system.lipschitz_grid", "needs at least 2 points per axis"));
        }
        Ok(())
    }

    pub fn theorem(&self) -> Result<Theorem, CliError> {
        Theorem::from_number(self.design.theorem).ok_or_else(|| field("design.theorem", "must be 1, 2 or 4"))
    }

    pub fn q(&self) -> Result<QSpec<f64>, CliError> {
        let n = self.system.state_dim;
        let q = match &self.design.q {
            QConfig::ScaledIdentity(s) => QSpec::scaled_identity(n, *s),
            QConfig::Explicit(data) => QSpec::new(matrix("design.Q.explicit", data, Some(n), Some(n))?),
        };
        q.map_err(|e| field("design.Q", e))
    }

    pub fn lipschitz_grid(&self) -> usize {
        self.system.lipschitz_grid.unwrap_or(DEFAULT_LIPSCHITZ_GRID)
    }

    pub fn region(&self) -> Result<BoxRegion<f64>, CliError> {
        let n = self.system.state_dim;
        let r = &self.system.region;
        BoxRegion::new(
            vector("system.region.lower", &r.lower, n)?,
            vector("system.region.upper", &r.upper, n)?,
        )
        .map_err(|e| field("system.region", e))
    }

    pub fn nonlinearity(&self) -> Result<ExprVector<f64>, CliError> {
        ExprVector::parse(&self.system.f, self.system.state_dim, self.system.input_dim)
            .map_err(|e| field("system.f", e))
    }

    /// The continuous plant. A missing `gamma_c` is left unset.
    pub fn continuous_model(&self) -> Result<ContinuousModel<f64>, CliError> {
        let s = &self.system;
        let n = s.state_dim;
        if n == 0 {
            return Err(field("system.state_dim", "must be positive"));
        }
        let a = matrix("system.A", &s.a, Some(n), Some(n))?;
        let c = matrix("system.C", &s.c, None, Some(n))?;
        let b = match &s.b {
            Some(b) => matrix("system.B", b, Some(n), None)?,
            None => DMatrix::zeros(n, 0),
        };
        let h = match &s.h {
            Some(h) => matrix("system.H", h, None, Some(n))?,
            None => DMatrix::zeros(0, n),
        };
        if let Some(g) = s.gamma_c {
            if !(g > 0.0 && g.is_finite()) {
                return Err(field("system.gamma_c", "must be positive"));
            }
        }
        ContinuousModel::new(a, c, b, h, self.nonlinearity()?, self.region()?, s.gamma_c)
            .map_err(|e| field("system", e))
    }

    /// Continuous plant with `gamma_c` filled in by a grid estimate when the
    /// configuration leaves it out.
    pub fn continuous_model_with_lipschitz(&self) -> Result<ContinuousModel<f64>, CliError> {
        let mut m = self.continuous_model()?;
        if m.gamma_c.is_none() {
            let u = DVector::zeros(self.system.input_dim);
            let est = estimate_lipschitz(&m.f, &m.region, self.lipschitz_grid(), &u)
                .map_err(|e| CliError::Failure(format!("Lipschitz estimate: {e}")))?;
            m.gamma_c = Some(est.gamma.max(1e-12));
        }
        Ok(m)
    }

    pub fn discretize_at(&self, cont: &ContinuousModel<f64>, sample_time: f64) -> Result<DiscreteModel<f64>, CliError> {
        let out = match self.discretization.method {
            Method::Euler => euler_discretize(cont, sample_time),
            Method::Taylor2 => taylor2_discretize(cont, sample_time, self.lipschitz_grid()),
        };
        out.map_err(|e| field("discretization", e))
    }

    pub fn discrete_model(&self) -> Result<DiscreteModel<f64>, CliError> {
        let cont = self.continuous_model_with_lipschitz()?;
        self.discretize_at(&cont, self.discretization.sample_time)
    }

    pub fn design_options(&self) -> DesignOptions<f64> {
        DesignOptions {
            gamma_d: self.design.gamma_d,
            mode: self.design.h8_mode,
            sequential: self.design.sequential,
            settings: self.solver.clone().unwrap_or_default(),
            ..DesignOptions::default()
        }
    }

    pub fn x0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.simulate.x0)
    }

    pub fn xhat0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.simulate.xhat0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_parses_and_round_trips() {
        let cfg = RunConfig::example();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.lipschitz_grid(), DEFAULT_LIPSCHITZ_GRID);
    }

    #[test]
    fn missing_h_for_theorem_four_names_the_field() {
        let mut cfg = RunConfig::example();
        cfg.design.theorem = 4;
        cfg.system.h = None;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("system.H"), "{err}");
    }

    #[test]
    fn shape_errors_name_the_field() {
        let mut cfg = RunConfig::example();
        cfg.system.a.pop();
        assert!(cfg.validate().unwrap_err().to_string().contains("system.A"));
        let mut cfg = RunConfig::example();
        cfg.simulate.x0.push(0.0);
        assert!(cfg.validate().unwrap_err().to_string().contains("simulate.x0"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{}\n[extra]\nvalue = 1\n", EXAMPLE_CONFIG);
        assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))));
    }
}
