use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn thermo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermo")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_scene(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("scene.json");
    fs::write(
        &spec,
        r#"{"width": 40, "height": 40, "frames": 72, "t0": 10, "noise_sigma": 0.01, "seed": 4,
            "defects": [{"shape": "disk", "cx": 20, "cy": 20, "radius": 5, "contrast_amplitude": 0.3}]}"#,
    )
    .unwrap();
    let cube = dir.join("scene.tcube");
    let out = thermo(&["synth", s(&spec), "-o", s(&cube)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    cube
}

#[test]
fn offline_analyze_then_eval_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let cube = small_scene(dir.path());
    let run = dir.path().join("run");
    let out = thermo(&["analyze", s(&cube), "--offline", "-o", s(&run)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("consensus"));

    let out = thermo(&["eval", s(&cube), s(&dir.path().join("gt.json"))]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["dice"].as_f64().unwrap() > 0.4);

    let exported = dir.path().join("exported");
    let out = thermo(&["export", s(&run), "-o", s(&exported)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(exported.join("tsr_slope.png").is_file());
}

#[test]
fn missing_sidecar_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cube = dir.path().join("lonely.tcube");
    fs::write(&cube, [0u8; 64]).unwrap();
    let out = thermo(&["analyze", s(&cube), "--offline", "-o", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lonely.json"));
}

#[test]
fn invalid_synth_spec_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    fs::write(&spec, r#"{"width": 40, "height": 40, "frames": 20, "t0": 10}"#).unwrap();
    let out = thermo(&["synth", s(&spec), "-o", s(&dir.path().join("x.tcube"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = thermo(&["synth", s(&dir.path().join("absent.json")), "-o", s(&dir.path().join("x.tcube"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreachable_endpoint_exits_4_with_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cube = small_scene(dir.path());
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let config = dir.path().join("cfg.json");
    fs::write(&config, r#"{"report": {"max_retries": 0, "backoff_base_ms": 1}}"#).unwrap();
    let run = dir.path().join("run");
    let endpoint = format!("http://127.0.0.1:{port}/v1");
    let out = thermo(&["analyze", s(&cube), "-c", s(&config), "--endpoint", &endpoint, "-o", s(&run)]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("metrics.json").is_file());
    assert!(run.join("masks/consensus.png").is_file());
}

#[test]
fn print_config_reflects_overrides() {
    let out =
        thermo(&["analyze", "unused.tcube", "--print-config", "--pct-k", "4", "--tsr-z", "2.5", "--offline"]);
    assert_eq!(out.status.code(), Some(0));
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["pct_k"], 4);
    assert_eq!(cfg["detect"]["tsr_slope_z"], 2.5);
    assert_eq!(cfg["report"]["offline"], true);
}

#[test]
fn bad_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    fs::write(&config, "{ not json").unwrap();
    let out = thermo(&["analyze", "x.tcube", "-c", s(&config)]);
    assert_eq!(out.status.code(), Some(2));
}
