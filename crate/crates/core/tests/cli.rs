use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use covlearn_core::cli::{EXIT_CONFIG, EXIT_DATA};

fn covlearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covlearn"))
        .args(args)
        .env_remove("COVLEARN_THREADS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_spec(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("spec.json");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"{"schema":"covlearn.dataset-spec/1","id":"D1","seed":4,"length":15,"train":2,"test":3}"#;

#[test]
fn generate_prints_path_and_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let out = dir.path().join("d.json");
    let a = covlearn(&["generate", "--spec", s(&spec), "--out", s(&out)]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let line = String::from_utf8(a.stdout).unwrap();
    assert!(line.starts_with(s(&out)) && line.contains("sha256:"), "{line}");

    let b = covlearn(&["generate", "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(line, String::from_utf8(b.stdout).unwrap());
    let c = covlearn(&["generate", "--spec", s(&spec), "--seed", "5", "--out", s(&out)]);
    assert_ne!(line, String::from_utf8(c.stdout).unwrap());
}

#[test]
fn preset_spec_has_twenty_five_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#"{"id":"D1"}"#);
    let out = dir.path().join("d.json");
    assert!(covlearn(&["generate", "--spec", s(&spec), "--out", s(&out)]).status.success());
    let d = covlearn_core::synth::Dataset::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(d.train.len() + d.test.len(), 25);
}

#[test]
fn invalid_spec_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        r#"{"id":"D1","latent":{"gps":[-0.5,0.5,0.1],"odom":[0.05,0.05,0.01]}}"#,
    );
    let out = dir.path().join("d.json");
    let r = covlearn(&["generate", "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(EXIT_CONFIG));
    assert!(!String::from_utf8_lossy(&r.stderr).is_empty());
    assert!(!out.exists());
}

#[test]
fn train_eval_curves_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let data = dir.path().join("d.json");
    assert!(covlearn(&["generate", "--spec", s(&spec), "--out", s(&data)]).status.success());

    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"schema":"covlearn.train-config/1","max_outer_iterations":4,"zero_order":{"max_evaluations":20}}"#,
    )
    .unwrap();
    let mut reports = Vec::new();
    for method in ["ours", "nelder-mead", "powell"] {
        let out = dir.path().join(format!("{method}.json"));
        let r = covlearn(&[
            "train", "--dataset", s(&data), "--method", method, "--bounds", "tight",
            "--config", s(&config), "--out", s(&out), "--threads", "1",
        ]);
        assert!(r.status.success(), "{method}: {}", String::from_utf8_lossy(&r.stderr));
        let report =
            covlearn_core::report::TrainReport::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(report.method.as_str(), method);
        for it in &report.iterations {
            assert!(it.theta.iter().all(|v| (0.1..=10.0).contains(v)));
        }
        assert!(report.spread_star <= 100.0 + 1e-9);
        reports.push(out);
    }

    let mut args = vec!["eval", "--dataset", s(&data)];
    for r in &reports {
        args.extend(["--report", s(r)]);
    }
    let table = covlearn(&args);
    assert!(table.status.success());
    let text = String::from_utf8(table.stdout).unwrap();
    let header = text.lines().next().unwrap();
    for label in ["Initial", "ours", "nelder-mead", "powell"] {
        assert!(header.contains(label), "{header}");
    }

    let csv = dir.path().join("curves.csv");
    let mut args = vec!["curves", "--out", s(&csv)];
    for r in &reports {
        args.extend(["--report", s(r)]);
    }
    assert!(covlearn(&args).status.success());
    let body = std::fs::read_to_string(&csv).unwrap();
    assert!(body.starts_with("method,run_id,wall_seconds,iteration,loss,transl_rmse,rot_rmse\n"));
    for method in ["ours", "nelder-mead", "powell"] {
        assert!(body.lines().any(|l| l.starts_with(&format!("{method},"))));
    }
}

#[test]
fn missing_files_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = dir.path().join("r.json");
    let r = covlearn(&["train", "--dataset", s(&missing), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(EXIT_DATA));
    let r = covlearn(&["curves", "--report", s(&missing), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(EXIT_DATA));
}

#[test]
fn empty_curves_input_and_bad_method_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    assert_eq!(covlearn(&["curves", "--out", s(&out)]).status.code(), Some(EXIT_CONFIG));

    let spec = write_spec(dir.path(), SMALL);
    let data = dir.path().join("d.json");
    assert!(covlearn(&["generate", "--spec", s(&spec), "--out", s(&data)]).status.success());
    let r = covlearn(&["train", "--dataset", s(&data), "--method", "leo", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn eval_rejects_wrong_class_names() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let data = dir.path().join("d.json");
    assert!(covlearn(&["generate", "--spec", s(&spec), "--out", s(&data)]).status.success());
    let theta = dir.path().join("theta.json");
    std::fs::write(&theta, r#"{"gps@p=0":[1,1,1],"odom":[1,1,1]}"#).unwrap();
    let r = covlearn(&["eval", "--dataset", s(&data), "--theta", s(&theta)]);
    assert_eq!(r.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn bounds_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let data = dir.path().join("d.json");
    assert!(covlearn(&["generate", "--spec", s(&spec), "--out", s(&data)]).status.success());
    let bounds = dir.path().join("bounds.json");
    std::fs::write(
        &bounds,
        r#"{"gps":{"lower":[0.5,0.5,0.5],"upper":[2,2,2]},"odom":{"lower":[0.5,0.5,0.5],"upper":[2,2,2]}}"#,
    )
    .unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"schema":"covlearn.train-config/1","max_outer_iterations":2}"#).unwrap();
    let out = dir.path().join("r.json");
    let r = covlearn(&[
        "train", "--dataset", s(&data), "--bounds", s(&bounds), "--config", s(&config), "--out", s(&out),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report = covlearn_core::report::TrainReport::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(report.theta_star.flatten().iter().all(|v| (0.5..=2.0).contains(v)));
}

#[test]
fn threads_env_must_be_numeric() {
    let r = Command::new(env!("CARGO_BIN_EXE_covlearn"))
        .args(["curves", "--out", "/dev/null"])
        .env("COVLEARN_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(EXIT_CONFIG));
}
