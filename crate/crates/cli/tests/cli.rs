use std::path::{Path, PathBuf};

use partial_dp_cli::run;
use serde_json::Value;

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run_to_file(dir: &Path, args: &[&str], out: &str) -> (i32, String) {
    let out = dir.join(out);
    let mut argv = vec!["pdp"];
    argv.extend_from_slice(args);
    argv.extend_from_slice(&["--out", out.to_str().unwrap()]);
    let code = run(argv);
    (code, std::fs::read_to_string(&out).unwrap_or_default())
}

const HH: &str = r#"{"data": {"source": "planted", "d": 16, "n": 3000, "fractions": [0.3, 0.2]},
                     "epsilon": 1.0, "nu": 0.1, "eta": 0.1}"#;

#[test]
fn account_reproduces_census_figure() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run_to_file(dir.path(), &["account", "--rho", "2.63", "--delta", "1e-6"], "a.json");
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&text).unwrap();
    let eps = v["epsilon_tight"].as_f64().unwrap();
    assert!((eps - 13.8).abs() / 13.8 < 0.02, "{eps}");
    assert!(v["epsilon_simple"].as_f64().unwrap() >= eps);
}

#[test]
fn account_from_per_attribute_budget() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run_to_file(dir.path(), &["account", "--eps0", "0.5", "--d", "4"], "a.json");
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["rho"].as_f64().unwrap(), 2.0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", HH);
    let args = ["heavy-hitters", "--config", cfg.to_str().unwrap(), "--trials", "200", "--seed", "7"];
    let (c1, a) = run_to_file(dir.path(), &args, "r1.json");
    let (c2, b) = run_to_file(dir.path(), &args, "r2.json");
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(a, b);
    let mut jobs = args.to_vec();
    jobs.extend_from_slice(&["--jobs", "3"]);
    let (c3, c) = run_to_file(dir.path(), &jobs, "r3.json");
    assert_eq!(c3, 0);
    assert_eq!(a, c);
}

#[test]
fn different_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", HH);
    let (_, a) = run_to_file(dir.path(), &["heavy-hitters", "--config", cfg.to_str().unwrap(), "--seed", "1"], "a.json");
    let (_, b) = run_to_file(dir.path(), &["heavy-hitters", "--config", cfg.to_str().unwrap(), "--seed", "2"], "b.json");
    assert_ne!(a, b);
}

#[test]
fn zero_noise_needs_test_harness() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", HH);
    let c = cfg.to_str().unwrap();
    assert_eq!(run(["pdp", "heavy-hitters", "--config", c, "--zero-noise"]), 2);
    let (code, text) = run_to_file(dir.path(), &["heavy-hitters", "--config", c, "--zero-noise", "--test-harness"], "z.json");
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["zero_noise"], Value::Bool(true));
}

#[test]
fn empty_sweep_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(r#"{{"mechanism": "heavy-hitters", "axis": "d", "values": [], "base": {HH}}}"#);
    let cfg = write(dir.path(), "s.json", &body);
    assert_eq!(run(["pdp", "sweep", "--config", cfg.to_str().unwrap()]), 2);
}

#[test]
fn bad_inputs_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(["pdp", "heavy-hitters", "--no-such-flag"]), 2);
    assert_eq!(run(["pdp", "heavy-hitters"]), 2);
    let missing = dir.path().join("missing.json");
    assert_eq!(run(["pdp", "heavy-hitters", "--config", missing.to_str().unwrap()]), 2);
    let unknown = write(dir.path(), "u.json", r#"{"data": {"source": "uniform", "d": 4, "n": 10}, "epsilon": 1, "nu": 0.1, "eta": 0.1, "extra": 1}"#);
    assert_eq!(run(["pdp", "heavy-hitters", "--config", unknown.to_str().unwrap()]), 2);
    // nu outside (0, 0.1]
    let bad_nu = write(dir.path(), "n.json", r#"{"data": {"source": "uniform", "d": 4, "n": 10}, "epsilon": 1, "nu": 0.5, "eta": 0.1}"#);
    assert_eq!(run(["pdp", "heavy-hitters", "--config", bad_nu.to_str().unwrap()]), 2);
    // eps * n below e
    let tiny = write(dir.path(), "t.json", r#"{"data": {"source": "uniform", "d": 4, "n": 2}, "epsilon": 1}"#);
    assert_eq!(run(["pdp", "estimate-dist", "--config", tiny.to_str().unwrap()]), 2);
    assert_eq!(run(["pdp", "account", "--rho", "-1"]), 2);
    assert_eq!(run(["pdp", "heavy-hitters", "--config", missing.to_str().unwrap(), "--trials", "0"]), 2);
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("no/such/dir/out.json");
    assert_eq!(run(["pdp", "account", "--rho", "1", "--out", out.to_str().unwrap()]), 1);
}

#[test]
fn csv_report_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", HH);
    let (code, text) =
        run_to_file(dir.path(), &["heavy-hitters", "--config", cfg.to_str().unwrap(), "--trials", "3", "--format", "csv"], "r.csv");
    assert_eq!(code, 0);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "trial_index,seed_path,max_count_error,list_size,heavy_items,heavy_recovered,success,eps,eps0"
    );
    assert_eq!(lines.len(), 1 + 3 + 7);
    assert!(lines[1].starts_with("0,0/0,"));
    assert!(lines[4].starts_with("mean,,"));
    assert!(lines[10].starts_with("max,,"));
}

#[test]
fn timing_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", HH);
    let (_, plain) = run_to_file(dir.path(), &["heavy-hitters", "--config", cfg.to_str().unwrap()], "a.json");
    assert!(!plain.contains("wall_time_s"));
    let (_, timed) = run_to_file(dir.path(), &["heavy-hitters", "--config", cfg.to_str().unwrap(), "--timing"], "b.json");
    assert!(timed.contains("wall_time_s"));
}

#[test]
fn every_mechanism_runs_from_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        ("marginals-projection", r#"{"data": {"source": "uniform", "d": 4, "n": 200}, "workload": {"k": 2, "kind": "parity"}, "sigma": 0.05}"#),
        ("mwem", r#"{"data": {"source": "uniform", "d": 6, "n": 500}, "workload": {"k": 2, "kind": "conjunction"}, "eps0": 1.0, "ell": 2, "rounds": 5}"#),
        ("heavy-hitters", HH),
        ("learn-point", r#"{"data": {"source": "point", "d": 8, "n": 2000, "positive_mass": 0.3}, "epsilon": 1.0, "alpha": 0.1}"#),
        ("learn-threshold", r#"{"data": {"source": "threshold", "d": 8, "n": 2000}, "epsilon": 1.0, "alpha": 0.1}"#),
        ("estimate-dist", r#"{"data": {"source": "support", "d": 16, "n": 2000, "size": 4}, "epsilon": 1.0}"#),
        ("learn-halfspace", r#"{"data": {"source": "majority", "d": 3, "n": 200, "concentration": 0.5, "label_noise": 0.1}, "gamma": 0.6, "gamma_prime": 0.2, "epsilon": 2.0}"#),
    ];
    for (cmd, body) in configs {
        let cfg = write(dir.path(), &format!("{cmd}.json"), body);
        let (code, text) = run_to_file(dir.path(), &[cmd, "--config", cfg.to_str().unwrap(), "--trials", "2"], &format!("{cmd}.out"));
        assert_eq!(code, 0, "{cmd}");
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["command"], Value::String(cmd.into()));
        assert_eq!(v["rows"].as_array().unwrap().len(), 2, "{cmd}");
        assert!(v["budget"]["per_person"].is_object(), "{cmd}");
        assert!(!v["output"].is_null(), "{cmd}");
    }
}

#[test]
fn sweep_emits_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(r#"{{"mechanism": "heavy-hitters", "axis": "d", "values": [8, 16], "base": {HH}}}"#);
    let cfg = write(dir.path(), "s.json", &body);
    let (code, text) = run_to_file(dir.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--trials", "3", "--format", "csv"], "s.csv");
    assert_eq!(code, 0);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("axis,value,trials,metric,mean"));
    assert!(lines[1].starts_with("d,8,3,max_count_error,"));
}
