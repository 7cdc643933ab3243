use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn csflock(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_csflock"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const LINE: &str = r#"
n_agents = 2
dim = 1
kappa = 1.0
kernel = "power:alpha=0.5"
[initial]
q = [1.0, 0.0]
p = [-1.0, 1.0]
[integrator]
t_end = 2.0
rel_tol = 1e-11
abs_tol = 1e-14
output_interval = 1e-4
"#;

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "line.toml", LINE);
    let out = csflock(&["simulate", cfg.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("line_out");
    for f in ["trajectory.jsonl", "summary.json", "plot.csv"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["event_counts"]["StickStart"], 1);
}

#[test]
fn fit_exponent_recovers_two_body_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "line.toml", LINE);
    assert!(csflock(&["simulate", cfg.to_str().unwrap()], &[]).status.success());
    let traj = dir.path().join("line_out/trajectory.jsonl");
    let out = csflock(&["fit-exponent", traj.to_str().unwrap(), "--pair", "0,1"], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let slope = v["slope"].as_f64().unwrap();
    assert!((slope - 2.0).abs() < 0.02, "slope {slope}");

    let out = csflock(&["fit-exponent", traj.to_str().unwrap(), "--pair", "0,0"], &[]);
    assert!(!out.status.success());
}

#[test]
fn simulate_step_floor_exits_3_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "floor.toml",
        r#"
n_agents = 2
dim = 1
kappa = 1.0
kernel = "power:alpha=2"
[initial]
q = [0.0, 1.0]
p = [1.0, -1.0]
[integrator]
t_end = 5.0
dt_min = 0.5
dt_init = 0.5
gap_safety = 0.1
"#,
    );
    let out = csflock(&["simulate", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(dir.path().join("floor_out/summary.json")).unwrap();
    assert!(summary.contains("step_floor_hit"));
    assert!(dir.path().join("floor_out/trajectory.jsonl").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "n_agents = 2\ndim = 1\n");
    assert_eq!(csflock(&["simulate", bad.to_str().unwrap()], &[]).status.code(), Some(2));
    assert_eq!(csflock(&["certify", bad.to_str().unwrap()], &[]).status.code(), Some(2));
    let weak_2d = write_config(dir.path(), "weak.toml", &LINE.replace("dim = 1", "dim = 2").replace("[1.0, 0.0]", "[[1.0, 0.0], [0.0, 0.0]]").replace("[-1.0, 1.0]", "[[-1.0, 0.0], [1.0, 0.0]]"));
    let out = csflock(&["simulate", weak_2d.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of scope"));
    let missing = dir.path().join("nope.toml");
    assert_eq!(csflock(&["simulate", missing.to_str().unwrap()], &[]).status.code(), Some(2));
}

#[test]
fn certify_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "line.toml", LINE);
    let out = csflock(&["certify", cfg.to_str().unwrap()], &[]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["flocking"]["holds"], true);
    assert_eq!(v["regularity"]["inputs"]["gamma_sup"].as_f64(), Some(2.0));
    assert!(v["sticking_rate_bounds"].is_array());
}

const SWEEP: &str = r#"
n_agents = 3
dim = 2
kappa = 1.0
kernel = "rational:beta=1"
[initial]
generator = "uniform"
seed = 4
[integrator]
t_end = 10.0
output_interval = 0.1
[sweep.params]
kappa = [1.0, 3.0]
seed = [1, 2]
"#;

#[test]
fn sweep_csv_is_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sweep.toml", SWEEP);
    let run = |w: &str| {
        let out = csflock(&["sweep", cfg.to_str().unwrap()], &[("CSFLOCK_WORKERS", w)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    let one = run("1");
    assert_eq!(one, run("4"));
    assert_eq!(one.lines().count(), 5);
    assert!(one.starts_with("kappa,seed,status"));
}

#[test]
fn sweep_failures_and_empty_grids() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write_config(dir.path(), "empty.toml", &SWEEP.replace("kappa = [1.0, 3.0]\nseed = [1, 2]", "kappa = []"));
    assert_eq!(csflock(&["sweep", empty.to_str().unwrap()], &[]).status.code(), Some(2));
    // A negative kappa fails validation for that row only.
    let failing = write_config(dir.path(), "fail.toml", &SWEEP.replace("kappa = [1.0, 3.0]", "kappa = [1.0, -1.0]"));
    let csv_path = dir.path().join("rows.csv");
    let out = csflock(&["sweep", failing.to_str().unwrap(), "--out", csv_path.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    let text = fs::read_to_string(csv_path).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.contains(",error,"));
}

#[test]
fn shipped_configs_certify() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let out = csflock(&["certify", path.to_str().unwrap()], &[]);
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        seen += 1;
    }
    assert!(seen >= 5);
}
