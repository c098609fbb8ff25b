use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_losscorr"))
}

const SMALL: &str = r#"
seed = 2
loss = "forward"

[data]
source = "synthetic"
classes = 3
per_class = 200
dim = 2
separation = 6.0
test_per_class = 100

[noise]
kind = "symmetric"
level = 0.2

[network]
hidden = [8]

[train]
epochs = 3
"#;

fn write_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(&p, SMALL).unwrap();
    p
}

#[test]
fn run_writes_reproducible_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("a");
    let mut reports = Vec::new();
    for _ in 0..2 {
        let status = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--t-source", "estimate", "--estimator-mode", "argmax", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    let a = reports.swap_remove(0);
    assert_eq!(a, reports[0]);
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["config"]["t_source"], "estimate");
    assert_eq!(report["config"]["estimator"]["mode"], "argmax");
    assert_eq!(report["stages"].as_array().unwrap().len(), 2);
    assert_eq!(report["test_label_checksum_before"], report["test_label_checksum_after"]);
    assert!(out.join("t_hat.csv").exists());
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("o");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--loss", "backward", "--noise-level", "0.1", "--seed", "5", "--identity-mix", "0.2", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["loss"], "backward");
    assert_eq!(report["config"]["noise"]["level"], 0.1);
    assert_eq!(report["config"]["seed"], 5);
    assert_eq!(report["config"]["identity_mix"], 0.2);
}

#[test]
fn singular_backward_fails_with_stage_tag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--loss", "backward", "--noise-kind", "symmetric", "--noise-level", "0.6666666666666666"])
        .arg("--out")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage `correct`"), "{err}");
    assert!(err.contains("identity_mix"), "{err}");
}

#[test]
fn missing_config_file_fails() {
    let out = bin().args(["run", "--config", "/nonexistent.toml"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
}

#[test]
fn inject_estimate_train_evaluate_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("o");
    let run = |args: &[&str]| {
        let o = bin().arg(args[0]).arg("--config").arg(&cfg).args(&args[1..]).arg("--out").arg(&out).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let inject = run(&["inject"]);
    assert!(inject.contains("flipped"));
    let noisy = std::fs::read_to_string(out.join("noisy_train.csv")).unwrap();
    assert_eq!(noisy.lines().count(), 600);
    assert!(out.join("t_true.csv").exists());

    let est = run(&["estimate", "--estimator-mode", "percentile", "--alpha", "0.9"]);
    assert!(est.contains("max_abs_error"));
    assert!(out.join("t_hat.json").exists());

    let t_file = format!("file={}", out.join("t_hat.csv").display());
    let train = run(&["train", "--t-source", &t_file]);
    assert!(train.starts_with("test_accuracy"));

    let model = out.join("model.json");
    let eval = run(&["evaluate", "--model", model.to_str().unwrap()]);
    assert_eq!(train, eval);

    let sweep = run(&["sweep", "--levels", "0.0,0.3", "--losses", "plain,forward", "--seeds", "1,2"]);
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], "dataset,noise_kind,N,loss_mode,T_source,seeds,acc_mean,acc_std,error");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("synthetic,symmetric,0,plain,truth,2,"));
    assert_eq!(std::fs::read_to_string(out.join("sweep.csv")).unwrap(), sweep);
}
