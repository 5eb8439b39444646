//! JSON reports and CSV writers.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use lipobs::observer::{DesignResult, RunMetrics, SimulationRun};
use lipobs::sdpcore::SolveStatus;
use lipobs::synth::H8Mode;
use lipobs::verify::{CertificateReport, SweepRow};

use crate::config::Method;
use crate::error::CliError;

/// Row-major nested lists.
pub type Rows = Vec<Vec<f64>>;

pub fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(name: &str, rows: &Rows) -> Result<DMatrix<f64>, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Config(format!("{name}: ragged rows")));
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub constraint: String,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverEntry {
    pub status: SolveStatus,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub probes: usize,
    #[serde(default)]
    pub below_feasible: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub theorem: u8,
    pub method: Method,
    pub sample_time: f64,
    #[serde(default)]
    pub mode: Option<H8Mode>,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "L")]
    pub l: Rows,
    #[serde(rename = "P")]
    pub p: Rows,
    #[serde(rename = "G")]
    pub g: Rows,
    pub epsilon: f64,
    pub gamma_d: f64,
    #[serde(default)]
    pub gamma_d_star: Option<f64>,
    #[serde(default)]
    pub gamma_c_star: Option<f64>,
    #[serde(default)]
    pub xi_star: Option<f64>,
    #[serde(default)]
    pub zeta_star: Option<f64>,
    #[serde(default)]
    pub mu_star: Option<f64>,
    #[serde(default)]
    pub pbar: Option<f64>,
    pub residuals: Vec<ResidualEntry>,
    pub certificate: CertificateReport,
    pub solver: SolverEntry,
}

impl DesignReport {
    pub fn new(d: &DesignResult<f64>, method: Method, sample_time: f64, certificate: CertificateReport) -> Self {
        Self {
            theorem: d.theorem.number(),
            method,
            sample_time,
            mode: d.mode,
            q: rows(d.q.matrix()),
            l: rows(&d.l),
            p: rows(&d.p),
            g: rows(&d.g),
            epsilon: d.epsilon,
            gamma_d: d.gamma_d,
            gamma_d_star: d.gamma_d_star,
            gamma_c_star: d.gamma_d_star.map(|g| g / sample_time),
            xi_star: d.xi_star,
            zeta_star: d.zeta_star,
            mu_star: d.mu_star,
            pbar: d.pbar,
            residuals: d
                .residuals
                .iter()
                .map(|r| ResidualEntry {
                    constraint: r.constraint.clone(),
                    value: r.value,
                    threshold: r.threshold,
                })
                .collect(),
            certificate,
            solver: SolverEntry {
                status: d.solver.status,
                iterations: d.solver.iterations,
                wall_time_s: d.solver.wall_time.as_secs_f64(),
                probes: d.solver.probes.len(),
                below_feasible: d.solver.below_feasible,
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("design report {}: {e}", path.display())))
    }

    pub fn gain(&self) -> Result<DMatrix<f64>, CliError> {
        from_rows("report.L", &self.l)
    }
}

/// Fixed 17-significant-digit formatting.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(format!("writing CSV: {e}"))
}

pub fn trajectory_csv<W: Write>(run: &SimulationRun<f64>, out: W) -> Result<(), CliError> {
    let n = run.x.first().map_or(0, |v| v.len());
    let q = run.w.first().map_or(0, |v| v.len());
    let r = run.z.first().map_or(0, |v| v.len());
    let mut header = vec!["k".to_string(), "t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("xhat{i}")));
    header.push("e_norm".into());
    header.extend((1..=q).map(|i| format!("w{i}")));
    header.extend((1..=r).map(|i| format!("z{i}")));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header).map_err(csv_error)?;
    for k in 0..run.t.len() {
        let mut rec = vec![k.to_string(), num(run.t[k])];
        rec.extend(run.x[k].iter().map(|v| num(*v)));
        rec.extend(run.xhat[k].iter().map(|v| num(*v)));
        rec.push(num(run.e[k].norm()));
        rec.extend(run.w[k].iter().map(|v| num(*v)));
        rec.extend(run.z[k].iter().map(|v| num(*v)));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)
}

pub fn sweep_csv<W: Write>(rows: &[SweepRow<f64>], out: W) -> Result<(), CliError> {
    let n = rows.iter().find_map(|r| r.gain.as_ref()).map_or(0, |g| g.len());
    let mut header: Vec<String> = ["sample_time", "steps", "gamma_d_star", "gamma_c_star"]
        .map(String::from)
        .into();
    header.extend((1..=n).map(|i| format!("l{i}")));
    header.extend(["steady_state_error", "error"].map(String::from));
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header).map_err(csv_error)?;
    for row in rows {
        let mut rec = vec![
            num(row.sample_time),
            row.steps.to_string(),
            opt(row.gamma_d_star),
            opt(row.gamma_c_star),
        ];
        match &row.gain {
            Some(g) => rec.extend(g.iter().map(|v| num(*v))),
            None => rec.extend((0..n).map(|_| String::new())),
        }
        rec.push(opt(row.steady_state_error));
        rec.push(row.error.clone().unwrap_or_default());
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSidecar {
    pub steps: usize,
    #[serde(flatten)]
    pub metrics: RunMetrics,
}

/// `traj.csv` → `traj.metrics.json`.
pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("metrics.json")
}

pub fn write_json<S: Serialize>(value: &S, path: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    match path {
        Some(p) => {
            std::fs::write(p, text + "\n").map_err(|e| CliError::Failure(format!("cannot write {}: {e}", p.display())))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
