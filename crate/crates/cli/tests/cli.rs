use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fusetrack"))
}

fn short_config(dir: &std::path::Path) -> PathBuf {
    let path = dir.join("short.json");
    std::fs::write(
        &path,
        r#"{"name": "short", "seed": 5, "duration": 1.0, "trajectory": [[0, 2.5, 0, 0], [1, 2.8, 0.2, 0.05]]}"#,
    )
    .unwrap();
    path
}

#[test]
fn unknown_mode_fails_with_nonzero_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--config", short_config(dir.path()).to_str().unwrap(), "--mode", "lidar", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown mode"));
    assert!(!dir.path().join("out").join("summary.csv").exists());
}

#[test]
fn missing_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["--config", "/nonexistent/scenario.json", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn single_mode_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["--config", short_config(dir.path()).to_str().unwrap(), "--mode", "fused", "--seed", "9", "--dump-frames", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.lines().nth(1).unwrap().starts_with("fused,"));
    for f in ["frames.csv", "updates_fused.csv", "plot_x.png", "plot_pce.png", "runtime.json"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    assert!(!out_dir.join("updates_camera.csv").exists());
    assert_eq!(std::fs::read_dir(out_dir.join("frames")).unwrap().count(), 25);
    let runtime = std::fs::read_to_string(out_dir.join("runtime.json")).unwrap();
    assert!(runtime.contains("\"seed\": 9"));
}
