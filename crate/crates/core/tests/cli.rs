use std::path::Path;
use std::process::{Command, Output};

fn labelsmith(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labelsmith")).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    labelsmith(args).status.code().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&["pls", "--help"]), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["stats", "--no-such-flag"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["pls", "--preds", "x.json", "--beta", "2"]), 1);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&["stats", "--annotations", missing.to_str().unwrap()]), 2);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&["stats", "--annotations", bad.to_str().unwrap()]), 2);
}

fn run_ok(args: &[&str]) -> String {
    let out = labelsmith(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).display().to_string();
    let sim = p("sim");
    let ann = format!("{sim}/annotations.json");
    let orig = format!("{sim}/preds_original.json");
    let aug = format!("{sim}/preds_hflip.json,{sim}/preds_blur.json,{sim}/preds_noise.json");

    std::fs::write(p("scenes.json"), r#"{"n_images": 40, "image_w": 160, "image_h": 120}"#).unwrap();
    run_ok(&["simulate", "--scenes", &p("scenes.json"), "--preset", "perfect", "--skip-images", "--out-dir", &sim]);
    run_ok(&["inject-errors", "--annotations", &ann, "--level", "1", "--out", &p("noisy.json"), "--ledger", &p("ledger.json")]);
    run_ok(&["glc", "--annotations", &p("noisy.json"), "--preds", &orig, "--preds-aug", &aug, "--out", &p("fixed.json"), "--report", &p("glc.json")]);
    run_ok(&["pls", "--preds", &orig, "--out", &p("sel.json")]);
    let eval = run_ok(&["eval", "--preds", &orig, "--annotations", &p("fixed.json")]);

    for f in ["noisy.json", "ledger.json", "fixed.json", "glc.json", "sel.json"] {
        assert!(Path::new(&p(f)).exists(), "{f} not written");
    }
    let report: serde_json::Value = serde_json::from_str(&eval).unwrap();
    assert_eq!(report["tool"], "labelsmith");
    assert_eq!(report["command"], "eval");
    assert!(report["config"].is_object());
    // perfect detector plus full correction leaves nothing missed
    assert_eq!(report["result"]["mdr"], 0.0);
}

#[test]
fn flag_beats_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).display().to_string();
    std::fs::write(p("scenes.json"), r#"{"n_images": 10, "image_w": 100, "image_h": 80}"#).unwrap();
    run_ok(&["simulate", "--scenes", &p("scenes.json"), "--skip-images", "--out-dir", &p("sim")]);
    std::fs::write(p("cfg.json"), r#"{"pls": {"beta": 0.3, "alpha": 0.05}}"#).unwrap();
    let preds = format!("{}/preds_original.json", p("sim"));
    let out = run_ok(&["--config", &p("cfg.json"), "pls", "--preds", &preds, "--beta", "0.2"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["config"]["beta"], 0.2);
    assert_eq!(v["config"]["alpha"], 0.05);
    assert_eq!(v["config"]["delta_s"], 0.4);
}
