use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mmcount"));
    c.env_remove("MMCOUNT_AGENT_URL");
    c
}

fn scene(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes").join(name)
}

fn run<S: AsRef<str>>(args: &[S]) -> Output {
    let args: Vec<&str> = args.iter().map(AsRef::as_ref).collect();
    let out = bin().args(&args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// A 20 s session keeps the staged runs short.
fn short_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, r#"{"protocol": {"sample_every_s": 10.0, "session_s": 20.0, "sample_span_ms": 1000}}"#).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn staged_commands_match_direction_of_ablation() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = short_config(t);
    let spec = scene("three_person.json");
    let p = |s: &str| t.join(s).to_str().unwrap().to_string();

    let spec_path = p("spec.json");
    let mut spec_json = json(&spec);
    spec_json["duration_s"] = serde_json::json!(20.0);
    std::fs::write(&spec_path, spec_json.to_string()).unwrap();

    run(&["synth", "--spec", &spec_path, "--seed", "4", "--out", &p("s")]);
    assert!(t.join("s/truth.json").exists());

    for (mode, dir) in [(None, "default"), (Some("--no-enhance"), "raw")] {
        let mut args = vec!["enhance".to_string(), "--input".into(), p("s/capture.jsonframes")];
        args.extend(mode.map(String::from));
        args.extend(["--out".into(), p(&format!("{dir}/e")), "--config".into(), cfg.clone()]);
        run(&args);
        run(&["detect", "--input", &p(&format!("{dir}/e/enhanced.jsonframes")), "--out", &p(&format!("{dir}/d"))]);
        run(&[
            "eval",
            "--detections",
            &p(&format!("{dir}/d/detections.json")),
            "--truth",
            &p("s/truth.json"),
            "--config",
            &cfg,
            "--out",
            &p(&format!("{dir}/v")),
        ]);
    }
    let default = json(&t.join("default/v/eval.json"));
    let raw = json(&t.join("raw/v/eval.json"));
    assert_eq!(default["n_samples"], 2);
    assert!(default["game"]["1"].as_f64().unwrap() < raw["game"]["1"].as_f64().unwrap());
}

#[test]
fn pipeline_writes_manifest_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = short_config(tmp.path());
    run(&["pipeline", "--spec", scene("three_person.json").to_str().unwrap(), "--seed", "0", "--config", &cfg, "--jobs", "2", "--out", out.to_str().unwrap()]);
    let report = json(&out.join("report.json"));
    assert!(report["accuracy"].is_number());
    assert_eq!(report["n_samples"], 2);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["agent"], "heuristic");
    assert_eq!(manifest["reproducible"], true);
    assert_eq!(manifest["jobs"], 2);
    for stage in ["synth", "enhance", "detect", "eval"] {
        assert!(manifest["stage_ms"][stage].is_number(), "{stage}");
    }
}

#[test]
fn pipeline_from_ingested_capture() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = short_config(t);
    let s = t.join("s");
    run(&["synth", "--spec", scene("three_person.json").to_str().unwrap(), "--format", "csv", "--out", s.to_str().unwrap()]);
    let out = t.join("run");
    run(&[
        "pipeline",
        "--input",
        s.join("capture.csv").to_str().unwrap(),
        "--truth",
        s.join("truth.json").to_str().unwrap(),
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(json(&out.join("report.json"))["n_samples"], 2);
    assert!(json(&out.join("manifest.json"))["stage_ms"]["ingest"].is_number());
}

#[test]
fn detect_on_empty_capture_gives_empty_report() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("empty.csv");
    std::fs::write(&input, "frame_index,timestamp_ms,x,y,z,doppler,energy\n").unwrap();
    let out = tmp.path().join("d");
    run(&["detect", "--input", input.to_str().unwrap(), "--grid", "32x32", "--out", out.to_str().unwrap()]);
    assert_eq!(json(&out.join("detections.json")), serde_json::json!([]));
}

#[test]
fn detect_can_write_heatmaps() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("c.csv");
    std::fs::write(&input, "0,0,0.1,1.0,0,0,20\n0,0,0.15,1.05,0,0,20\n1,100,0.1,1.0,0,0,20\n").unwrap();
    let out = tmp.path().join("d");
    run(&["detect", "--input", input.to_str().unwrap(), "--heatmaps", "--out", out.to_str().unwrap()]);
    let sidecar = json(&out.join("heatmaps/window_00000000.json"));
    assert_eq!(sidecar["grid_shape"], serde_json::json!([64, 64]));
    assert_eq!(sidecar["counts"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum::<u64>(), 60);
    let png = std::fs::read(out.join("heatmaps/window_00000000.png")).unwrap();
    assert_eq!(&png[1..4], b"PNG");
}

#[test]
fn failures_exit_with_codes_and_json() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = bin().args(["pipeline", "--spec", "/definitely/missing.json", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["exit_code"], 2);

    let bad_spec = tmp.path().join("bad.json");
    std::fs::write(&bad_spec, r#"{"n_persons": 2, "seats": [{"x": 0, "y": 1}]}"#).unwrap();
    let out = bin().args(["synth", "--spec"]).arg(&bad_spec).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "invalid-spec");

    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let out = bin()
        .env("MMCOUNT_AGENT_URL", format!("http://127.0.0.1:{port}"))
        .args(["pipeline", "--spec"])
        .arg(scene("three_person.json"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "agent-unavailable");

    let out = bin().args(["detect", "--input"]).arg(&bad_spec).args(["--window-ms", "100", "--stride-ms", "300", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
