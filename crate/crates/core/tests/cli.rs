use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hbac::config::{Preset, RunConfig};
use hbac::pulse::ControlPulse;
use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn hbac(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hbac"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn printed_configs_reparse_identically() {
    for (preset, expected) in [
        ("ideal", RunConfig::preset(Preset::Ideal)),
        ("calibrated", RunConfig::preset(Preset::Calibrated)),
    ] {
        let out = Command::new(env!("CARGO_BIN_EXE_hbac"))
            .args(["--preset", preset, "--print-default-config"])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), expected);
    }
}

#[test]
fn paper_circuit_summary() {
    let tmp = TempDir::new().unwrap();
    let out = hbac(tmp.path(), &["cool", "run"]);
    assert_eq!(out.status.code(), Some(0));
    let s = json(tmp.path().join("summary.json"));
    let shown: Vec<&str> = s["ideal_after_compressions_2dp"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(shown, ["1.50", "1.75", "1.88", "1.94"]);
    let simulated: Vec<f64> = s["target_after_compressions_over_bath"]
        .as_array()
        .unwrap()
        .iter()
        .map(f)
        .collect();
    for (sim, ideal) in simulated.iter().zip([1.5, 1.75, 1.875, 1.9375]) {
        assert!((sim - ideal).abs() / ideal < 5e-4, "{sim} vs {ideal}");
    }
    assert_eq!(s["exceeds_shannon_bound"], Value::Bool(true));
    assert_eq!(s["noisy_gate_count"], 0);
}

#[test]
fn zero_rounds_write_initial_rows_only() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[schedule]\nrounds = 0\n");
    let out = hbac(tmp.path(), &["--config", &cfg, "cool", "run"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[1], "\"initial\"");
        assert_eq!(fields[3].parse::<f64>().unwrap(), 0.0);
        assert_eq!(fields[4].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn calibrated_preset_brackets_experiment() {
    let tmp = TempDir::new().unwrap();
    let out = hbac(tmp.path(), &["--preset", "calibrated", "cool", "run"]);
    assert_eq!(out.status.code(), Some(0));
    let s = json(tmp.path().join("summary.json"));
    let c2 = f(&s["final_biases_over_bath"][0]);
    assert!(c2 > 1.5 && c2 < 1.94, "{c2}");
    // Two swaps and a compression in round 1, one swap and a compression after.
    assert_eq!(s["noisy_gate_count"], 3 + 2 * 3);
}

#[test]
fn steady_examples() {
    let cases = [
        ("[bath]\nepsilon0 = 0.01\n", 3, 0.02, 1e-4),
        ("[bath]\nepsilon0 = 0.0\n", 3, 0.0, 0.0),
        ("[bath]\nepsilon0 = 1e-4\n[system]\nn_qubits = 5\nreset_index = 4\n[schedule]\nkind = \"ppa\"\n", 5, 8e-4, 8e-4 * 0.02),
    ];
    for (text, n, expected, tol) in cases {
        let tmp = TempDir::new().unwrap();
        let cfg = write_config(tmp.path(), text);
        let out = hbac(tmp.path(), &["--config", &cfg, "cool", "steady"]);
        assert_eq!(out.status.code(), Some(0), "{text}");
        let s = json(tmp.path().join("steady.json"));
        assert_eq!(s["n_qubits"], n);
        let bias = f(&s["steady_bias"]);
        assert!((bias - expected).abs() <= tol, "{bias} vs {expected}");
        assert!(s["rounds_used"].as_u64().unwrap() >= 1);
    }
}

#[test]
fn sweep_rows_and_single_point_grid() {
    let tmp = TempDir::new().unwrap();
    let out = hbac(tmp.path(), &["cool", "sweep"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    let steady = |n: f64, e: f64, p: f64| {
        rows.iter()
            .find(|r| r[0] == n && r[1] == e && r[2] == p)
            .map(|r| r[3])
            .unwrap()
    };
    assert!(steady(3.0, 0.87, 0.01) >= 0.95);
    assert!(steady(3.0, 0.81, 0.0) > steady(3.0, 0.81, 0.01));
    assert_eq!(rows.len(), 8);

    let one = TempDir::new().unwrap();
    let cfg = write_config(
        one.path(),
        "[bath]\nepsilon0 = 0.05\n[sweep]\nn_qubits = [3]\nepsilon = [0.05]\ndepolarizing = [0.0]\n",
    );
    assert_eq!(hbac(one.path(), &["--config", &cfg, "cool", "sweep"]).status.code(), Some(0));
    assert_eq!(hbac(one.path(), &["--config", &cfg, "cool", "steady"]).status.code(), Some(0));
    let row: Vec<String> = fs::read_to_string(one.path().join("sweep.csv"))
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(String::from)
        .collect();
    let s = json(one.path().join("steady.json"));
    assert_eq!(row[3].parse::<f64>().unwrap(), f(&s["steady_bias"]));
    assert_eq!(row[6].parse::<u64>().unwrap(), s["rounds_used"].as_u64().unwrap());
}

#[test]
fn invalid_inputs_exit_one() {
    let tmp = TempDir::new().unwrap();
    let bad_key = write_config(tmp.path(), "[bath]\nepsilon = 0.1\n");
    assert_eq!(hbac(tmp.path(), &["--config", &bad_key, "cool", "run"]).status.code(), Some(1));
    assert_eq!(
        hbac(tmp.path(), &["--config", "/nonexistent/config.toml", "cool", "run"]).status.code(),
        Some(1)
    );
    assert_eq!(hbac(tmp.path(), &["--preset", "tepid", "cool", "run"]).status.code(), Some(1));
    assert_eq!(hbac(tmp.path(), &["cool", "boil"]).status.code(), Some(1));
    assert_eq!(hbac(tmp.path(), &[]).status.code(), Some(1));

    let pulse = tmp.path().join("bad_pulse.txt");
    fs::write(&pulse, "dt_seconds 1e-5\nn_samples 3\n0.0 0.0\n").unwrap();
    let out = hbac(tmp.path(), &["pulse", "verify", "--pulse", pulse.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!tmp.path().join("verify.json").exists());
}

#[test]
fn help_and_version_exit_zero() {
    for flag in ["--help", "--version"] {
        let out = Command::new(env!("CARGO_BIN_EXE_hbac")).arg(flag).output().unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
}

#[test]
fn non_convergence_exits_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[steady]\nmax_rounds = 3\n");
    let out = hbac(tmp.path(), &["--config", &cfg, "cool", "steady"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn grape_below_target_still_writes_results() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            "{}\nmax_iterations = 3\n",
            fs::read_to_string(fixture("swap2.toml")).unwrap()
        ),
    );
    let out = hbac(tmp.path(), &["--config", &cfg, "pulse", "grape"]);
    assert_eq!(out.status.code(), Some(3));
    let summary = json(tmp.path().join("grape.json"));
    assert_eq!(summary["termination"], "max-iterations");
    assert_eq!(summary["target_reached"], Value::Bool(false));
    let history = fs::read_to_string(tmp.path().join("history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("iteration,objective,robust_fidelity,step_size"));
    assert_eq!(history.lines().count(), 1 + 4);
    let pulse = ControlPulse::read(&tmp.path().join("pulse.txt")).unwrap();
    assert_eq!(pulse.len(), 80);

    let out = hbac(
        tmp.path(),
        &["--config", &cfg, "pulse", "verify", "--pulse", tmp.path().join("pulse.txt").to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0));
    let verify = json(tmp.path().join("verify.json"));
    for (a, b) in [("robust_fidelity", "robust_fidelity"), ("worst_grid_fidelity", "worst_grid_fidelity")] {
        assert!((f(&verify[a]) - f(&summary[b])).abs() <= 1e-12);
    }
}

#[test]
fn zero_pulse_on_free_spin() {
    let tmp = TempDir::new().unwrap();
    let pulse = tmp.path().join("zero.txt");
    ControlPulse::zeros(1e-5, 10).unwrap().write(&pulse).unwrap();
    for (goal, expected) in [("\"identity\"", 1.0), ("{ x = 0 }", 0.0)] {
        let cfg = write_config(
            tmp.path(),
            &format!("[hamiltonian]\ntable_khz = [[0.0]]\n[grape]\ngoal = {goal}\n"),
        );
        let out = hbac(tmp.path(), &["--config", &cfg, "pulse", "verify", "--pulse", pulse.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        let v = json(tmp.path().join("verify.json"));
        assert!((f(&v["pointwise_fidelity"]) - expected).abs() < 1e-12, "{goal}");
    }
}

#[test]
fn shipped_pulse_is_robust() {
    let tmp = TempDir::new().unwrap();
    let out = hbac(
        tmp.path(),
        &[
            "--config",
            fixture("swap2.toml").to_str().unwrap(),
            "pulse",
            "verify",
            "--pulse",
            fixture("swap2_pulse.txt").to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let v = json(tmp.path().join("verify.json"));
    assert!(f(&v["robust_fidelity"]) >= 0.9975);
    assert!(f(&v["worst_grid_fidelity"]) > 0.99);
}
