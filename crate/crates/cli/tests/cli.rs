use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepself"))
        .args(args)
        .env("DEEPSELF_LOG", "error")
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn repo(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel).to_string_lossy().into_owned()
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let out_s = out.to_string_lossy();
    let r = run(&["train", "--config", &repo("configs/synthetic_cnn.ini"), "--epochs", "2", "--output-dir", &out_s]);
    assert!(r.status.success(), "{}", stderr(&r));
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3, "{history}");
}

#[test]
fn config_errors_name_their_origin() {
    let dir = tempfile::tempdir().unwrap();
    let ini = dir.path().join("bad.ini");
    std::fs::write(&ini, "[general]\nepochs = 0\n").unwrap();
    let r = run(&["train", "--config", &ini.to_string_lossy(), "--manifest", &repo("data/synthetic/manifest.csv")]);
    assert_eq!(r.status.code(), Some(1));
    let msg = stderr(&r);
    assert!(msg.contains("bad.ini") && msg.contains("general.epochs"), "{msg}");

    std::fs::write(&ini, "[general]\nmomentum = 0.9\n").unwrap();
    let r = run(&["train", "--config", &ini.to_string_lossy()]);
    assert!(stderr(&r).contains("momentum"), "{}", stderr(&r));
}

#[test]
fn missing_manifest_is_reported() {
    let r = run(&["train", "--manifest", "/nonexistent/manifest.csv"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("/nonexistent/manifest.csv"), "{}", stderr(&r));
}

#[test]
fn fuse_rejects_mismatched_ids() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    std::fs::write(&a, "id,label,prob_0,prob_1\nx,0,0.9,0.1\n").unwrap();
    std::fs::write(&b, "id,label,prob_0,prob_1\ny,1,0.2,0.8\n").unwrap();
    let out = dir.path().join("f");
    let r = run(&["fuse", &a.to_string_lossy(), &b.to_string_lossy(), "--output-dir", &out.to_string_lossy()]);
    assert!(!r.status.success());
    assert!(!out.join("fused.csv").exists());
}
