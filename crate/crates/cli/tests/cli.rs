//! End-to-end tests of the `janus` binary: exit-code lanes, golden stdout,
//! file outputs, and a live device-against-cloud run over loopback.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use janus_core::{Decision, LatencyModel, ModelSpec, NetworkTrace, SimMetrics};

fn janus() -> Command {
    Command::new(env!("CARGO_BIN_EXE_janus"))
}

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn stdout_str(out: &Output) -> &str {
    std::str::from_utf8(&out.stdout).expect("stdout is UTF-8")
}

fn stderr_str(out: &Output) -> &str {
    std::str::from_utf8(&out.stderr).expect("stderr is UTF-8")
}

#[test]
fn help_and_version_succeed() {
    for flag in ["--help", "--version"] {
        let out = janus().arg(flag).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{flag} failed: {}", stderr_str(&out));
    }
}

#[test]
fn usage_errors_exit_one() {
    let out = janus().arg("no-such-subcommand").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = janus().args(["schedule", "--bogus-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_errors_exit_two() {
    let out = janus()
        .args(["prune-table", "--spec"])
        .arg(assets().join("specs/vit_b.json"))
        .args(["--alpha", "0.005"]) // off the 0.01 grid
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_str(&out));
    assert!(stderr_str(&out).starts_with("error:"));

    let out = janus()
        .args(["schedule", "--spec", "/no/such/spec.json"])
        .args(["--device-model", "/x", "--cloud-model", "/y", "--bandwidth-mbps", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("/no/such/spec.json"));
}

#[test]
fn codec_errors_exit_three() {
    let mut child = janus()
        .args(["lzw", "decompress"])
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&[0x12]).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_str(&out));
}

#[test]
fn split_points_golden_line() {
    let out = janus().args(["split-points", "--layers", "12", "--k", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_str(&out), "0 1 2 3 5 7 9 12 13\n");
}

#[test]
fn prune_table_emits_csv() {
    let out = janus()
        .args(["prune-table", "--spec"])
        .arg(assets().join("specs/vit_b.json"))
        .args(["--alpha", "0.49"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    let text = stdout_str(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("layer,delta,tokens_after"));
    // Layer 1 drops floor(2^(0.49 * 11)) = floor(2^5.39) = 41 of 197 tokens.
    assert_eq!(lines.next(), Some("1,41,156"));
    assert_eq!(text.lines().count(), 13);
}

#[test]
fn asset_specs_match_builtin_geometries() {
    let cases = [
        ("specs/vit_b.json", ModelSpec::vit_b()),
        ("specs/vit_l_384.json", ModelSpec::vit_l_384()),
        ("specs/video_vit_l.json", ModelSpec::video_vit_l()),
    ];
    for (file, want) in cases {
        let got = ModelSpec::from_json_file(&assets().join(file)).unwrap();
        assert_eq!(got, want, "{file} drifted from the built-in definition");
    }
}

#[test]
fn profile_fit_recovers_asset_line() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("device.json");
    let out = janus()
        .args(["profile", "fit", "--samples"])
        .arg(assets().join("device_profile.csv"))
        .arg("--out")
        .arg(&model_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    let model = LatencyModel::from_json_file(&model_path).unwrap();
    assert!((model.slope_ms_per_token - 0.8).abs() < 1e-9);
    assert!((model.intercept_ms - 12.0).abs() < 1e-9);
    assert!(model.r > 0.999);
}

#[test]
fn schedule_emits_decision_json() {
    let dir = tempfile::tempdir().unwrap();
    let device = dir.path().join("device.json");
    let cloud = dir.path().join("cloud.json");
    std::fs::write(&device, LatencyModel::from_coefficients(0.02, 0.1).to_json().unwrap())
        .unwrap();
    std::fs::write(&cloud, LatencyModel::from_coefficients(0.005, 0.1).to_json().unwrap())
        .unwrap();
    let out = janus()
        .args(["schedule", "--spec"])
        .arg(assets().join("specs/vit_l_384.json"))
        .arg("--device-model")
        .arg(&device)
        .arg("--cloud-model")
        .arg(&cloud)
        .args(["--bandwidth-mbps", "37.68", "--sla-ms", "300"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    let decision: Decision = serde_json::from_str(stdout_str(&out)).unwrap();
    assert!(decision.feasible);
    assert!(decision.predicted_total_ms <= 300.0);
    let parts = decision.device_ms + decision.cloud_ms + decision.comm_ms;
    assert!((decision.predicted_total_ms - parts).abs() < 1e-6);
}

#[test]
fn simulate_writes_metrics_and_per_frame_csv() {
    let dir = tempfile::tempdir().unwrap();
    let metrics_path = dir.path().join("metrics.json");
    let frames_path = dir.path().join("frames.csv");
    let out = janus()
        .args(["simulate", "--spec"])
        .arg(assets().join("specs/vit_b.json"))
        .arg("--trace")
        .arg(assets().join("trace_sample.csv"))
        .args(["--frames", "25", "--device-slope", "0.05", "--cloud-slope", "0.005"])
        .args(["--sla-ms", "100"])
        .arg("--out")
        .arg(&metrics_path)
        .arg("--per-frame")
        .arg(&frames_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    assert!(stdout_str(&out).is_empty(), "metrics went to a file, not stdout");
    let metrics: SimMetrics =
        serde_json::from_str(&std::fs::read_to_string(&metrics_path).unwrap()).unwrap();
    assert_eq!(metrics.frames, 25);
    let frames = std::fs::read_to_string(&frames_path).unwrap();
    assert!(frames.starts_with("frame,alpha,split,predicted_ms,measured_ms,violated,accuracy"));
    assert_eq!(frames.lines().count(), 26);
}

#[test]
fn compare_prints_summary_and_writes_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("cmp");
    let out = janus()
        .args(["compare", "--spec"])
        .arg(assets().join("specs/vit_b.json"))
        .arg("--trace")
        .arg(assets().join("trace_sample.csv"))
        .args(["--frames", "10", "--device-slope", "0.05", "--cloud-slope", "0.005"])
        .args(["--sla-ms", "100"])
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    let summary = stdout_str(&out);
    assert!(summary.starts_with("policy,throughput_fps,violation_ratio"));
    assert_eq!(summary.lines().count(), 5, "header plus one row per policy");
    for name in
        ["comparison.csv", "frames_janus.csv", "frames_cloud_only.csv", "frames_device_only.csv", "frames_mixed.csv"]
    {
        assert!(out_dir.join(name).is_file(), "{name} missing");
    }
    assert_eq!(std::fs::read_to_string(out_dir.join("comparison.csv")).unwrap(), summary);
}

#[test]
fn lzw_filters_round_trip() {
    let data: Vec<u8> = (0..50_000u32).map(|i| (i * i % 251) as u8).collect();
    let pipe = |args: &[&str], input: &[u8]| -> Vec<u8> {
        let mut child = janus()
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(input).unwrap();
        let out = child.wait_with_output().unwrap();
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
        out.stdout
    };
    let packed = pipe(&["lzw", "compress"], &data);
    assert!(packed.len() < data.len(), "structured input should shrink");
    let unpacked = pipe(&["lzw", "decompress"], &packed);
    assert_eq!(unpacked, data);
}

#[test]
fn trace_convert_canonicalizes_raw_capture() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("trace.csv");
    let out = janus()
        .args(["trace", "convert", "--input"])
        .arg(assets().join("raw_trace_sample.csv"))
        .arg("--mapping")
        .arg(assets().join("mapping_sample.json"))
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    // The raw capture is out of order, has a duplicate timestamp, and one
    // zero-bandwidth row; the output must be a loadable canonical trace with
    // the first duplicate kept and the dead row dropped.
    let text = std::fs::read_to_string(&out_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "timestamp_s,uplink_mbps");
    assert_eq!(lines.len(), 7, "6 samples survive: {text}");
    assert_eq!(lines[4], "3,0.15", "first sample at a duplicated timestamp wins");
    assert!(!text.contains("\n4,"), "zero-bandwidth row must be dropped");
    NetworkTrace::from_csv_file(&out_path).expect("output must load as a trace");
    assert!(stderr_str(&out).contains("1 row(s) skipped"));
}

/// Kills the server process even when an assertion fails mid-test.
struct KillOnDrop(Child);

impl Drop for KillOnDrop {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn device_runs_against_cloud_over_loopback() {
    let mut server = KillOnDrop(
        janus()
            .args(["cloud", "serve", "--config"])
            .arg(assets().join("cloud_config.json"))
            .args(["--host", "127.0.0.1", "--port", "0"])
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap(),
    );
    // The server announces its bound address on stderr; wait for it rather
    // than racing the bind.
    let stderr = server.0.stderr.take().unwrap();
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let mut line = String::new();
        let _ = BufReader::new(stderr).read_line(&mut line);
        let _ = tx.send(line);
    });
    let line = rx
        .recv_timeout(std::time::Duration::from_secs(10))
        .expect("server never announced its address");
    let addr = line.trim().rsplit(' ').next().expect("address missing").to_string();
    assert!(addr.starts_with("127.0.0.1:"), "unexpected announcement: {line}");

    let out = janus()
        .args(["device", "run", "--server", &addr, "--spec"])
        .arg(assets().join("specs/vit_b.json"))
        .args(["--slope", "0.01", "--intercept", "0.02"])
        .args(["--split", "6", "--alpha", "0.25", "--frames", "2", "--compress"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    let text = stdout_str(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("frame,e2e_ms,device_ms,comm_ms,cloud_ms,payload_raw_bytes,payload_wire_bytes")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        // 173 surviving tokens at split 6 under alpha 0.25, 3072 bytes each.
        assert_eq!(row[5], "531456");
        let wire: u64 = row[6].parse().unwrap();
        assert!(wire > 0 && wire < 531_456, "compression must shrink the tensor");
    }
    assert!(stderr_str(&out).contains("2 frame(s)"));
}

#[test]
fn device_run_refuses_off_grid_alpha() {
    let out = janus()
        .args(["device", "run", "--server", "127.0.0.1:1", "--spec"])
        .arg(assets().join("specs/vit_b.json"))
        .args(["--slope", "0.01", "--split", "1", "--alpha", "0.0001"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_str(&out));
    assert!(stderr_str(&out).contains("grid"));
}
