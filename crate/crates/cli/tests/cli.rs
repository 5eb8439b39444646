use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lipobs_cli::commands::LipschitzReport;
use lipobs_cli::config::{Disturbance, QConfig};
use lipobs_cli::report::DesignReport;
use lipobs_cli::RunConfig;
use tempfile::TempDir;

fn lipobs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lipobs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &TempDir, name: &str, cfg: &RunConfig) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn design_reproduces_gamma_c_star() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ex.toml", &RunConfig::example());
    let report = dir.path().join("design.json");
    let out = lipobs(&["design", "--config", s(&cfg), "--report", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = DesignReport::load(&report).unwrap();
    let g = rep.gamma_c_star.unwrap();
    assert!((g - 0.67).abs() <= 0.067, "gamma_c* = {g}");
    assert!(rep.certificate.pass);
    assert_eq!(rep.l.len(), 2);
    assert_eq!(rep.solver.below_feasible, Some(false));
}

#[test]
fn missing_h_with_theorem_four_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::example();
    cfg.design.theorem = 4;
    cfg.system.h = None;
    let path = write_config(&dir, "noh.toml", &cfg);
    let out = lipobs(&["design", "--config", s(&path)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("system.H"));
}

#[test]
fn analytic_infeasibility_exits_two() {
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::example();
    cfg.design.theorem = 1;
    cfg.design.gamma_d = Some(10.0);
    cfg.design.q = QConfig::ScaledIdentity(1.0);
    let path = write_config(&dir, "t1.toml", &cfg);
    let out = lipobs(&["design", "--config", s(&path)]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_config_names_the_field() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.toml");
    let text = RunConfig::example()
        .to_toml()
        .replace("method = \"euler\"", "method = \"zoh\"");
    std::fs::write(&path, text).unwrap();
    let out = lipobs(&["design", "--config", s(&path)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("method"));
    assert_eq!(code(&lipobs(&["design", "--config", "/nonexistent.toml"])), 3);
}

#[test]
fn simulate_settles_and_is_bit_stable() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ex.toml", &RunConfig::example());
    let report = dir.path().join("design.json");
    assert_eq!(
        code(&lipobs(&["design", "--config", s(&cfg), "--report", s(&report)])),
        0
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let res = lipobs(&["simulate", "--config", s(&cfg), "--report", s(&report), "--out", s(out)]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let (header, rows) = csv_rows(&a);
    assert_eq!(
        header,
        ["k", "t", "x1", "x2", "xhat1", "xhat2", "e_norm", "w1", "z1", "z2"]
    );
    assert_eq!(rows.len(), 101);
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.metrics.json")).unwrap()).unwrap();
    let settling = sidecar["settling_index"].as_u64().unwrap();
    assert!(settling <= 30, "settling index {settling}");
    assert!(sidecar["empirical_gain"].as_f64().is_some());

    let c = dir.path().join("c.csv");
    assert_eq!(
        code(&lipobs(&[
            "simulate",
            "--config",
            s(&cfg),
            "--report",
            s(&report),
            "--out",
            s(&c),
            "--seed",
            "99"
        ])),
        0
    );
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn undisturbed_matched_start_has_zero_error() {
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::example();
    let path = write_config(&dir, "ex.toml", &cfg);
    let report = dir.path().join("design.json");
    assert_eq!(
        code(&lipobs(&["design", "--config", s(&path), "--report", s(&report)])),
        0
    );
    cfg.simulate.disturbance = Disturbance::None;
    cfg.simulate.xhat0 = cfg.simulate.x0.clone();
    let path = write_config(&dir, "quiet.toml", &cfg);
    let out = dir.path().join("quiet.csv");
    assert_eq!(
        code(&lipobs(&[
            "simulate",
            "--config",
            s(&path),
            "--report",
            s(&report),
            "--out",
            s(&out)
        ])),
        0
    );
    let (header, rows) = csv_rows(&out);
    let col = header.iter().position(|h| h == "e_norm").unwrap();
    assert!(rows.iter().all(|r| r[col].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn empirical_gain_respects_paired_hinf_design() {
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::example();
    cfg.design.theorem = 4;
    cfg.design.q = QConfig::ScaledIdentity(1.0);
    cfg.design.h8_mode = lipobs::synth::H8Mode::Tightened;
    cfg.simulate.xhat0 = cfg.simulate.x0.clone();
    let path = write_config(&dir, "hinf.toml", &cfg);
    let report = dir.path().join("hinf.json");
    let out = lipobs(&["design", "--config", s(&path), "--report", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mu = DesignReport::load(&report).unwrap().mu_star.unwrap();
    let csv = dir.path().join("hinf.csv");
    assert_eq!(
        code(&lipobs(&[
            "simulate",
            "--config",
            s(&path),
            "--report",
            s(&report),
            "--out",
            s(&csv)
        ])),
        0
    );
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("hinf.metrics.json")).unwrap()).unwrap();
    let gain = sidecar["empirical_gain"].as_f64().unwrap();
    assert!(gain <= mu, "gain {gain} > mu {mu}");
}

#[test]
fn report_dimension_mismatch_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ex.toml", &RunConfig::example());
    let report = dir.path().join("design.json");
    assert_eq!(
        code(&lipobs(&["design", "--config", s(&cfg), "--report", s(&report)])),
        0
    );
    let mut rep = DesignReport::load(&report).unwrap();
    rep.l.push(vec![0.0]);
    std::fs::write(&report, serde_json::to_string(&rep).unwrap()).unwrap();
    let out = lipobs(&[
        "simulate",
        "--config",
        s(&cfg),
        "--report",
        s(&report),
        "--out",
        s(&dir.path().join("x.csv")),
    ]);
    assert_eq!(code(&out), 3);
}

fn lipschitz_of(dir: &TempDir, f: [&str; 2]) -> LipschitzReport {
    let mut cfg = RunConfig::example();
    cfg.system.f = f.map(String::from).to_vec();
    cfg.system.lipschitz_grid = Some(21);
    let path = write_config(dir, "lip.toml", &cfg);
    let out = dir.path().join("lip.json");
    assert_eq!(code(&lipobs(&["lipschitz", "--config", s(&path), "--out", s(&out)])), 0);
    serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap()
}

#[test]
fn lipschitz_of_linear_and_zero_maps() {
    let dir = TempDir::new().unwrap();
    let rep = lipschitz_of(&dir, ["0.5*x1", "0"]);
    assert!((rep.gamma_estimate - 0.5).abs() < 1e-12);
    assert_eq!(rep.argmax_point.len(), 2);
    assert_eq!(lipschitz_of(&dir, ["0", "0"]).gamma_estimate, 0.0);
}

#[test]
fn sweep_rows_and_bad_times() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ex.toml", &RunConfig::example());
    let out = dir.path().join("sweep.csv");
    let res = lipobs(&["sweep", "--config", s(&cfg), "--t-list", "0.1", "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let (header, rows) = csv_rows(&out);
    assert_eq!(header[0], "sample_time");
    assert_eq!(rows.len(), 1);
    assert_eq!(code(&lipobs(&["sweep", "--config", s(&cfg), "--t-list", "0.1,0"])), 3);
    assert_eq!(code(&lipobs(&["sweep", "--config", s(&cfg), "--t-list", "-0.1"])), 3);
}

#[test]
fn reproduce_example_runs_end_to_end() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("example.json");
    let out = lipobs(&["reproduce-example", "--report", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let g = rep["theorem2"]["gamma_c_star"].as_f64().unwrap();
    assert!((g - 0.67).abs() <= 0.067);
    let hinf = rep["hinf"].as_array().unwrap();
    assert_eq!(hinf.len(), 5);
    assert!(hinf[0]["outcome"].as_str().unwrap().contains("not admissible"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mu* (sequential faithful)"));
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(code(&lipobs(&["frobnicate"])), 3);
    assert_eq!(code(&lipobs(&["design"])), 3);
    assert_eq!(code(&lipobs(&["--help"])), 0);
}
