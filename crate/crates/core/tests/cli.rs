use std::path::Path;
use std::process::{Command, Output};

use ergoswitch::cli::RunConfig;
use serde_json::Value;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergoswitch"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("ERGOSWITCH_WORKERS")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn error_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("error JSON on stdout")
}

#[test]
fn solve_embeds_config_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "solve",
            "--builtin",
            "lq",
            "--radius",
            "4",
            "--nodes-per-unit",
            "20",
            "--seed",
            "5",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let v = read_json(&dir.path().join("solve.json"));
    assert_eq!(v["command"], "solve");
    assert_eq!(v["seed"], 5);
    assert_eq!(v["passed"], true);
    let config: RunConfig = serde_json::from_value(v["config"].clone()).unwrap();
    assert_eq!(v["config_hash"], config.hash());
    assert_eq!(v["config"]["model"]["builtin"]["params"]["q"], 0.1875);
    let lambda = v["result"]["lambda"].as_f64().unwrap();
    assert!(lambda > 0.2 && lambda < 0.25);

    let psi = std::fs::read_to_string(dir.path().join("psi.csv")).unwrap();
    assert_eq!(psi.lines().next(), Some("x1,regime,psi"));
    assert_eq!(psi.lines().count(), 1 + 159);
    let meta = read_json(&dir.path().join("run_meta.json"));
    assert_eq!(meta["config_hash"], v["config_hash"]);
    assert_eq!(meta["exit_code"], 0);
}

#[test]
fn hash_tracks_inputs_but_not_output_location() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "solve",
        "--builtin",
        "ou2",
        "--radius",
        "2",
        "--nodes-per-unit",
        "10",
    ];
    run(&args, a.path());
    run(&[&args[..], &["--workers", "3"]].concat(), b.path());
    let ha = read_json(&a.path().join("solve.json"))["config_hash"].clone();
    let hb = read_json(&b.path().join("solve.json"))["config_hash"].clone();
    assert_eq!(ha, hb);

    let c = tempfile::tempdir().unwrap();
    run(&[&args[..], &["--param", "rho=0.7"]].concat(), c.path());
    let hc = read_json(&c.path().join("solve.json"))["config_hash"].clone();
    assert_ne!(ha, hc);
}

#[test]
fn usage_errors_exit_2_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["solve"],
        &["solve", "--builtin", "nosuch"],
        &["solve", "--builtin", "lq", "--param", "zz=1"],
        &["solve", "--builtin", "lq", "--param", "q"],
        &["solve", "--config", "/nonexistent/model.json"],
        &["sweep", "--builtin", "lq", "--radii", "4,2"],
        &[
            "solve",
            "--builtin",
            "lq",
            "--radius",
            "1.03",
            "--nodes-per-unit",
            "10",
        ],
        &[
            "simulate",
            "--builtin",
            "lq",
            "--policy",
            "constant:7",
            "--radius",
            "2",
            "--nodes-per-unit",
            "10",
        ],
    ];
    for args in cases {
        let out = run(args, dir.path());
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stdout)
        );
        let e = error_of(&out);
        assert_eq!(e["error"]["kind"], "usage", "{args:?}");
        assert_eq!(e["exit_code"], 2);
    }
}

#[test]
fn oversized_step_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "simulate",
            "--builtin",
            "ou2",
            "--param",
            "rho=20",
            "--radius",
            "2",
            "--nodes-per-unit",
            "10",
            "--step",
            "0.1",
            "--paths",
            "10",
            "--horizon",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert_eq!(error_of(&out)["error"]["kind"], "numeric");
}

#[test]
fn config_file_model_solves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("model.json");
    std::fs::write(
        &cfg,
        r#"{"builtin": {"name": "lq", "params": {"q": 0.1875}}, "controls": [1.0, 2.0]}"#,
    )
    .unwrap();
    let out = run(
        &[
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--radius",
            "4",
            "--nodes-per-unit",
            "20",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let v = read_json(&dir.path().join("solve.json"));
    assert_eq!(v["result"]["policy_histogram"].as_array().unwrap().len(), 2);
}

#[test]
fn perturbed_lambda_fails_verify() {
    let args = [
        "verify",
        "--builtin",
        "ou2",
        "--radius",
        "2",
        "--nodes-per-unit",
        "40",
        "--paths",
        "2000",
        "--horizon",
        "4",
        "--fk-paths",
        "4000",
        "--fk-step",
        "0.002",
        "--policy-samples",
        "2",
    ];
    let dir = tempfile::tempdir().unwrap();
    let out = run(&args, dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let v = read_json(&dir.path().join("verify.json"));
    assert_eq!(v["result"]["feynman_kac"]["passed"], true);

    let out = run(
        &[&args[..], &["--lambda-offset", "0.5"]].concat(),
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let v = read_json(&dir.path().join("verify.json"));
    assert_eq!(v["passed"], false);
    assert_eq!(v["result"]["feynman_kac"]["passed"], false);
    assert_eq!(v["result"]["optimality"]["passed"], true);
}
