use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use lipobs::example::{self, published};
use lipobs::model::estimate_lipschitz;
use lipobs::observer::{design, gaussian_disturbance, simulate_discrete, DesignError, SimulationRun, Theorem};
use lipobs::synth::{H8Mode, QSpec};
use lipobs::verify::{practical_convergence_sweep, verify_certificate, SweepOptions, SweepRow, VerifyError};

use crate::config::{Disturbance, RunConfig};
use crate::error::CliError;
use crate::report::{self, DesignReport, MetricsSidecar};

/// Relative distance beyond which a computed value is flagged against the
/// published one.
pub const DISCREPANCY: f64 = 0.2;

pub fn design_report(cfg: &RunConfig) -> Result<DesignReport, CliError> {
    let model = cfg.discrete_model()?;
    let d = design(&model, &cfg.q()?, cfg.theorem()?, &cfg.design_options())?;
    let cert = verify_certificate(&model, &d);
    Ok(DesignReport::new(
        &d,
        cfg.discretization.method,
        cfg.discretization.sample_time,
        cert,
    ))
}

/// Writes the report, then fails with exit 4 if the certificate does not
/// hold.
pub fn cmd_design(cfg: &RunConfig, report_path: Option<&Path>) -> Result<DesignReport, CliError> {
    let rep = design_report(cfg)?;
    report::write_json(&rep, report_path.or(cfg.output.report_path.as_deref()))?;
    if !rep.certificate.pass {
        return Err(CliError::Failure(
            "design returned but the certificate check failed".into(),
        ));
    }
    Ok(rep)
}

pub fn disturbance(cfg: &RunConfig, seed: Option<u64>, dim: usize) -> Result<Vec<DVector<f64>>, CliError> {
    match cfg.simulate.disturbance {
        Disturbance::None => Ok(Vec::new()),
        Disturbance::Gaussian { sigma, seed: s } => {
            gaussian_disturbance(seed.unwrap_or(s), sigma, cfg.simulate.steps, dim)
                .map_err(|e| CliError::Config(format!("simulate.disturbance: {e}")))
        }
    }
}

pub fn simulation(cfg: &RunConfig, rep: &DesignReport, seed: Option<u64>) -> Result<SimulationRun<f64>, CliError> {
    let model = cfg.discrete_model()?;
    let l = rep.gain()?;
    if l.shape() != (model.state_dim(), model.output_dim()) {
        return Err(CliError::Config(format!(
            "report L is {}x{}, configuration needs {}x{}",
            l.nrows(),
            l.ncols(),
            model.state_dim(),
            model.output_dim()
        )));
    }
    if rep.method != cfg.discretization.method || rep.sample_time != cfg.discretization.sample_time {
        return Err(CliError::Config(format!(
            "report was designed for {:?} at T = {}, configuration has {:?} at T = {}",
            rep.method, rep.sample_time, cfg.discretization.method, cfg.discretization.sample_time
        )));
    }
    let w = disturbance(cfg, seed, model.disturbance_dim())?;
    simulate_discrete(&model, &l, &cfg.x0(), &cfg.xhat0(), &[], &w, cfg.simulate.steps)
        .map_err(|e| CliError::Failure(format!("simulation: {e}")))
}

/// CSV to `out` (or stdout) and the metrics sidecar next to it (or stderr).
pub fn write_trajectory(run: &SimulationRun<f64>, out: Option<&Path>) -> Result<(), CliError> {
    let sidecar = MetricsSidecar {
        steps: run.t.len().saturating_sub(1),
        metrics: run.metrics.clone(),
    };
    match out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))?;
            report::trajectory_csv(run, std::io::BufWriter::new(file))?;
            report::write_json(&sidecar, Some(&report::sidecar_path(path)))
        }
        None => {
            report::trajectory_csv(run, std::io::stdout().lock())?;
            eprintln!("{}", serde_json::to_string_pretty(&sidecar).expect("metrics serialize"));
            Ok(())
        }
    }
}

pub fn cmd_simulate(
    cfg: &RunConfig,
    report_path: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<SimulationRun<f64>, CliError> {
    let rep = DesignReport::load(report_path)?;
    let run = simulation(cfg, &rep, seed)?;
    write_trajectory(&run, out.or(cfg.output.trajectories_path.as_deref()))?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub gamma_estimate: f64,
    pub argmax_point: Vec<f64>,
    pub grid_points_per_axis: usize,
}

pub fn lipschitz(cfg: &RunConfig) -> Result<LipschitzReport, CliError> {
    let f = cfg.nonlinearity()?;
    let region = cfg.region()?;
    let grid = cfg.lipschitz_grid();
    let est = estimate_lipschitz(&f, &region, grid, &DVector::zeros(cfg.system.input_dim))
        .map_err(|e| CliError::Config(format!("system: {e}")))?;
    Ok(LipschitzReport {
        gamma_estimate: est.gamma,
        argmax_point: est.argmax.iter().copied().collect(),
        grid_points_per_axis: grid,
    })
}

pub fn cmd_lipschitz(cfg: &RunConfig, out: Option<&Path>) -> Result<LipschitzReport, CliError> {
    let rep = lipschitz(cfg)?;
    report::write_json(&rep, out)?;
    Ok(rep)
}

pub fn sweep(cfg: &RunConfig, sample_times: &[f64]) -> Result<Vec<SweepRow<f64>>, CliError> {
    if sample_times.is_empty() {
        return Err(CliError::Config(
            "--t-list: at least one sampling time is required".into(),
        ));
    }
    if let Some(bad) = sample_times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(CliError::Config(format!(
            "--t-list: sampling times must be positive, got {bad}"
        )));
    }
    let cont = cfg.continuous_model_with_lipschitz()?;
    let options = SweepOptions {
        duration: cfg.simulate.steps as f64 * cfg.discretization.sample_time,
        substeps: cfg.simulate.substeps,
        x0: cfg.x0(),
        xhat0: cfg.xhat0(),
        design: cfg.design_options(),
    };
    practical_convergence_sweep(&cont, sample_times, &options).map_err(|e| match e {
        VerifyError::Parameter(m) => CliError::Config(format!("--t-list: {m}")),
        other => CliError::Failure(other.to_string()),
    })
}

pub fn cmd_sweep(cfg: &RunConfig, sample_times: &[f64], out: Option<&Path>) -> Result<Vec<SweepRow<f64>>, CliError> {
    let rows = sweep(cfg, sample_times)?;
    match out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))?;
            report::sweep_csv(&rows, std::io::BufWriter::new(file))?;
        }
        None => report::sweep_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HinfRow {
    pub label: String,
    pub mode: H8Mode,
    pub sequential: bool,
    pub q_scale: f64,
    #[serde(default)]
    pub mu_star: Option<f64>,
    #[serde(default)]
    pub gain: Option<Vec<f64>>,
    #[serde(default)]
    pub pbar: Option<f64>,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub quantity: String,
    pub published: String,
    pub computed: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExampleReport {
    pub lipschitz: Option<LipschitzReport>,
    pub theorem2: Option<DesignReport>,
    pub hinf: Vec<HinfRow>,
    pub simulation: Option<MetricsSidecar>,
    pub comparison: Vec<ComparisonRow>,
    pub failures: Vec<String>,
}

fn discrepancy(published: f64, computed: f64) -> String {
    let rel = (computed - published).abs() / published.abs();
    if rel > DISCREPANCY {
        format!("differs by {:.0}%", rel * 100.0)
    } else {
        String::new()
    }
}

fn hinf_row(cfg: &RunConfig, label: &str, mode: H8Mode, sequential: bool, q_scale: f64) -> Result<HinfRow, CliError> {
    let model = cfg.discrete_model()?;
    let q = QSpec::scaled_identity(model.state_dim(), q_scale).map_err(|e| CliError::Config(e.to_string()))?;
    let mut options = cfg.design_options();
    options.mode = mode;
    options.sequential = sequential;
    let mut row = HinfRow {
        label: label.into(),
        mode,
        sequential,
        q_scale,
        mu_star: None,
        gain: None,
        pbar: None,
        outcome: String::new(),
    };
    match design(&model, &q, Theorem::Four, &options) {
        Ok(d) => {
            let cert = verify_certificate(&model, &d);
            row.mu_star = d.mu_star;
            row.gain = Some(d.l.iter().copied().collect());
            row.pbar = d.pbar;
            row.outcome = if cert.pass {
                "certified".into()
            } else {
                "certificate check failed".into()
            };
        }
        Err(e @ (DesignError::Infeasible { .. } | DesignError::Synth(_))) => row.outcome = e.to_string(),
        Err(e) => return Err(CliError::from(e)),
    }
    Ok(row)
}

fn fmt_vec(v: &[f64]) -> String {
    format!(
        "[{}]",
        v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
    )
}

/// Lipschitz estimate, theorem 2, theorem 4 in every mode, and a disturbed
/// run of the theorem 2 observer, compared against the published numbers.
/// Stage failures are recorded and the remaining stages still run.
pub fn reproduce_example(seed: Option<u64>) -> (ExampleReport, Option<SimulationRun<f64>>) {
    let cfg = RunConfig::example();
    let mut rep = ExampleReport::default();
    let mut run = None;

    match lipschitz(&cfg) {
        Ok(l) => {
            rep.comparison.push(ComparisonRow {
                quantity: "gamma_c".into(),
                published: example::GAMMA_C.to_string(),
                computed: format!("{:.4}", l.gamma_estimate),
                note: format!("grid estimate on the region; design uses {}", example::GAMMA_C),
            });
            rep.lipschitz = Some(l);
        }
        Err(e) => rep.failures.push(format!("lipschitz: {e}")),
    }

    match design_report(&cfg) {
        Ok(d) => {
            let g = d.gamma_c_star.unwrap_or(f64::NAN);
            rep.comparison.push(ComparisonRow {
                quantity: "gamma_c*".into(),
                published: published::GAMMA_C_STAR.to_string(),
                computed: format!("{g:.4}"),
                note: discrepancy(published::GAMMA_C_STAR, g),
            });
            if !d.certificate.pass {
                rep.failures.push("theorem 2: certificate check failed".into());
            }
            match simulation(&cfg, &d, seed) {
                Ok(r) => {
                    let published_k = (published::SETTLING_SECONDS / cfg.discretization.sample_time).round();
                    rep.comparison.push(ComparisonRow {
                        quantity: "settling sample".into(),
                        published: format!("{published_k}"),
                        computed: r.metrics.settling_index.map_or("never".into(), |k| k.to_string()),
                        note: format!("threshold {:.3e}", r.metrics.settling_threshold),
                    });
                    rep.simulation = Some(MetricsSidecar {
                        steps: cfg.simulate.steps,
                        metrics: r.metrics.clone(),
                    });
                    run = Some(r);
                }
                Err(e) => rep.failures.push(format!("simulate: {e}")),
            }
            rep.theorem2 = Some(d);
        }
        Err(e) => rep.failures.push(format!("theorem 2: {e}")),
    }

    let q_scale = match cfg.design.q {
        crate::config::QConfig::ScaledIdentity(s) => s,
        crate::config::QConfig::Explicit(_) => example::Q_SCALE,
    };
    let mut cases: Vec<(String, H8Mode, bool, f64)> = H8Mode::ALL
        .iter()
        .map(|&m| (format!("sequential {m}"), m, true, q_scale))
        .collect();
    cases.extend([H8Mode::Faithful, H8Mode::Tightened].map(|m| {
        (
            format!("{m} at gamma_d, Q = {} I", example::HINF_Q_SCALE),
            m,
            false,
            example::HINF_Q_SCALE,
        )
    }));
    for (label, mode, sequential, q) in cases {
        match hinf_row(&cfg, &label, mode, sequential, q) {
            Ok(row) => {
                let (computed, note) = match row.mu_star {
                    Some(mu) => (format!("{mu:.4}"), discrepancy(published::MU_STAR, mu)),
                    None => ("-".into(), row.outcome.clone()),
                };
                rep.comparison.push(ComparisonRow {
                    quantity: format!("mu* ({label})"),
                    published: published::MU_STAR.to_string(),
                    computed,
                    note,
                });
                if let Some(l) = &row.gain {
                    rep.comparison.push(ComparisonRow {
                        quantity: format!("L ({label})"),
                        published: fmt_vec(&published::GAIN),
                        computed: fmt_vec(l),
                        note: String::new(),
                    });
                }
                rep.hinf.push(row);
            }
            Err(e) => rep.failures.push(format!("{label}: {e}")),
        }
    }
    if let Some(d) = &rep.theorem2 {
        let l: Vec<f64> = d.l.iter().flatten().copied().collect();
        rep.comparison.push(ComparisonRow {
            quantity: "L (theorem 2)".into(),
            published: fmt_vec(&published::GAIN),
            computed: fmt_vec(&l),
            note: "published gain comes from the H-infinity design".into(),
        });
    }
    (rep, run)
}

pub fn print_table(rep: &ExampleReport) {
    let width = rep
        .comparison
        .iter()
        .map(|r| r.quantity.len())
        .max()
        .unwrap_or(8)
        .max(8);
    println!("{:<width$}  {:>18}  {:>18}  note", "quantity", "published", "computed");
    for r in &rep.comparison {
        println!(
            "{:<width$}  {:>18}  {:>18}  {}",
            r.quantity, r.published, r.computed, r.note
        );
    }
    for f in &rep.failures {
        println!("FAILED {f}");
    }
}

pub fn cmd_reproduce_example(
    report_path: Option<&Path>,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<ExampleReport, CliError> {
    let (rep, run) = reproduce_example(seed);
    print_table(&rep);
    if let Some(path) = report_path {
        report::write_json(&rep, Some(path))?;
    }
    if let (Some(run), Some(path)) = (&run, out) {
        write_trajectory(run, Some(path))?;
    }
    if rep.failures.is_empty() {
        Ok(rep)
    } else {
        Err(CliError::Failure(format!("{} stage(s) failed", rep.failures.len())))
    }
}
