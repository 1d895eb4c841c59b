use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const QUADRATIC_ODE: &str = r#"
version = 1
[problem]
name = "quadratic_diag"
eigenvalues = [1.0, 2.0]
noise = { kind = "gaussian", sigma = 0.5 }
[schedule]
kind = "adam"
lambda = 1.0
alpha1 = 1.0
alpha2 = 1.0
[ode]
system = "general"
x0 = [1.0, -1.0]
t_end = 200.0
record_every = 500
"#;

fn adaflow(dir: &TempDir, sub: &str, config: &str) -> (Output, std::path::PathBuf) {
    let cfg = dir.path().join("config.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_adaflow"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    (output, out)
}

fn summary_value(out: &Path, key: &str) -> String {
    let text = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")).map(str::to_owned))
        .unwrap_or_else(|| panic!("{key} missing from summary"))
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn ode_residual_trends_to_zero() {
    let dir = TempDir::new().unwrap();
    let (o, out) = adaflow(&dir, "ode", QUADRATIC_ODE);
    assert!(o.status.success(), "{}", stderr(&o));
    let traj = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let residuals: Vec<f64> = traj
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(residuals.len() > 10);
    assert!(residuals.last().unwrap() < &1e-3);
    assert!(residuals.last().unwrap() < &residuals[0]);
    assert!(out.join("assumptions.csv").exists());
}

#[test]
fn malformed_config_writes_nothing() {
    let dir = TempDir::new().unwrap();
    for bad in [
        "version = 1\n[problem\nname = 1".to_owned(),
        QUADRATIC_ODE.replace("t_end = 200.0", "t_end = 200.0\nbogus = true"),
        QUADRATIC_ODE.replace("version = 1", "version = 9"),
        QUADRATIC_ODE.replace("x0 = [1.0, -1.0]", "x0 = [1.0]"),
    ] {
        let (o, out) = adaflow(&dir, "ode", &bad);
        assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
        assert!(!out.exists());
    }
}

#[test]
fn missing_section_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let (o, out) = adaflow(&dir, "optimize", QUADRATIC_ODE);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[optimize]"));
    assert!(!out.exists());
}

#[test]
fn nesterov_reports_change_of_variable() {
    let cfg = r#"
version = 1
[problem]
name = "quadratic_diag"
eigenvalues = [1.0, 2.0]
[schedule]
kind = "nag"
alpha = 3.0
[ode]
system = "nesterov"
x0 = [1.0, 1.0]
t_end = 20.0
record_every = 50
change_of_variable = 100
"#;
    let dir = TempDir::new().unwrap();
    let (o, out) = adaflow(&dir, "ode", cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("change-of-variable residual"));
    let r: f64 = summary_value(&out, "cov_residual").parse().unwrap();
    assert!(r <= 1e-7);
}

const CLT: &str = r#"
version = 1
seed = 1
eps = 1.0
[problem]
name = "quadratic_diag"
eigenvalues = [1.0]
noise = { kind = "gaussian", sigma = 1.0 }
[schedule]
kind = "constant"
h = 1.0
r = 1.0
p = 1.0
q = 1.0
[stepsize]
gamma0 = 0.5
alpha = 0.7
[clt]
n_runs = 50
n_iter = 2000
"#;

#[test]
fn clt_scalar_reference() {
    let dir = TempDir::new().unwrap();
    let (o, out) = adaflow(&dir, "clt", CLT);
    assert!(o.status.success(), "{}", stderr(&o));
    let cov = std::fs::read_to_string(out.join("covariance.csv")).unwrap();
    let g2: f64 = cov
        .lines()
        .find_map(|l| l.strip_prefix("gamma2,0,0,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((g2 - 0.353_553_390_593_273_8).abs() < 1e-12);
    let kept: usize = summary_value(&out, "kept").parse().unwrap();
    let filtered: usize = summary_value(&out, "filtered").parse().unwrap();
    assert_eq!(kept + filtered, 50);
    assert_eq!(
        std::fs::read_to_string(out.join("samples.csv"))
            .unwrap()
            .lines()
            .count(),
        kept + 1
    );
}

#[test]
fn clt_without_noise_is_degenerate() {
    let dir = TempDir::new().unwrap();
    let cfg = CLT.replace("sigma = 1.0", "sigma = 0.0");
    let (o, out) = adaflow(&dir, "clt", &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let cov = std::fs::read_to_string(out.join("covariance.csv")).unwrap();
    for line in cov.lines().skip(1) {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(v.abs() < 1e-12, "{line}");
    }
}

#[test]
fn clt_stepsize_bound() {
    let dir = TempDir::new().unwrap();
    let cfg = CLT.replace("gamma0 = 0.5\nalpha = 0.7", "gamma0 = 0.5\nalpha = 1.0");
    let (o, out) = adaflow(&dir, "clt", &cfg);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stepsize constraint"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn divergent_runs_are_tallied() {
    let cfg = r#"
version = 1
[problem]
name = "quadratic_diag"
eigenvalues = [1.0, 2.0]
noise = { kind = "gaussian", sigma = 0.5 }
[schedule]
kind = "heavy_ball"
r = 1.0
[stepsize]
gamma0 = 50.0
alpha = 0.7
[optimize]
algorithm = "general"
n_iter = 5000
n_runs = 4
x0 = [1.0, 1.0]
"#;
    let dir = TempDir::new().unwrap();
    let (o, out) = adaflow(&dir, "optimize", cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    assert_eq!(summary_value(&out, "diverged"), "4");
    let finals = std::fs::read_to_string(out.join("final.csv")).unwrap();
    assert_eq!(finals.matches(",diverged,").count(), 4);
}

#[test]
fn minimum_skips_escape() {
    let cfg = r#"
version = 1
eps = 1.0
[problem]
name = "saddle_quartic"
noise = { kind = "gaussian", sigma = 0.5 }
[schedule]
kind = "adam"
lambda = 1.0
alpha1 = 3.0
alpha2 = 1.0
[stepsize]
gamma0 = 0.25
alpha = 0.7
[traps]
x_star = [0.0, -1.0]
algorithm = "general"
n_runs = 10
n_iter = 100
check_assumptions = false
"#;
    let dir = TempDir::new().unwrap();
    let (o, out) = adaflow(&dir, "traps", cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("skipped"));
    assert_eq!(summary_value(&out, "d_plus"), "0");
    assert!(!out.join("escape.csv").exists());
}

#[test]
fn nag_trap_arm() {
    let cfg = r#"
version = 1
seed = 4
[problem]
name = "saddle_quartic"
noise = { kind = "gaussian", sigma = 0.5 }
[schedule]
kind = "nag"
alpha = 3.0
[stepsize]
gamma0 = 0.1
alpha = 0.7
[traps]
x_star = [0.0, 0.0]
algorithm = "nag"
n_runs = 20
n_iter = 20000
init_radius = 0.1
check_assumptions = false
"#;
    let dir = TempDir::new().unwrap();
    let (o, out) = adaflow(&dir, "traps", cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(summary_value(&out, "d_plus"), "1");
    assert_eq!(summary_value(&out, "excitation").parse::<f64>().unwrap(), 0.25);
    assert_eq!(summary_value(&out, "excited_at_saddle"), "0");
    assert_eq!(summary_value(&out, "control_at_saddle"), "20");
}

#[test]
fn thread_count_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, CLT).unwrap();
    let run = |threads: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_adaflow"))
            .args(["clt", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(out))
            .env("ADAFLOW_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(dir.path().join(out).join("samples.csv")).unwrap()
    };
    assert_eq!(run("1", "a"), run("3", "b"));

    let o = Command::new(env!("CARGO_BIN_EXE_adaflow"))
        .args(["clt", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("c"))
        .env("ADAFLOW_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
