use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vidpower(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vidpower")).args(args).current_dir(dir).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_measured_presets() {
    let tmp = tempfile::tempdir().unwrap();
    for (preset, want) in [("measured-baseline", 2162.0), ("measured-burstlink", 1274.0)] {
        let out = vidpower(&["simulate", "--preset", preset, "--out", preset], tmp.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let dir = tmp.path().join(preset);
        for f in ["report.json", "report.csv", "timeline.csv", "timeline.svg"] {
            assert!(dir.join(f).is_file(), "{f} missing");
        }
        let r = json(&dir.join("report.json"));
        let avg = r["average_power_mw"].as_f64().unwrap();
        assert!((avg - want).abs() <= 1.0, "{preset}: {avg}");
        assert_eq!(r["manifest"]["preset"], preset);
        assert_eq!(r["manifest"]["calibration"], "measured");
        assert_eq!(r["manifest"]["command"], "simulate");
    }
}

#[test]
fn invalid_config_exits_2_with_violation_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"video_fps": 45, "display": {"resolution": "4K", "refresh_hz": 60}, "scheme": "burstlink"}"#;
    fs::write(tmp.path().join("bad.json"), cfg).unwrap();
    let out = vidpower(&["simulate", "--config", "bad.json", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let v: Value = serde_json::from_str(stderr.lines().next().unwrap()).unwrap();
    assert_eq!(v["code"], "workload.repeat_ratio_not_integral");
}

#[test]
fn malformed_json_and_usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("broken.json"), "{ not json").unwrap();
    assert_eq!(vidpower(&["simulate", "--config", "broken.json"], tmp.path()).status.code(), Some(2));
    assert_eq!(vidpower(&["simulate"], tmp.path()).status.code(), Some(2));
    assert_eq!(vidpower(&["simulate", "--preset", "no-such-preset"], tmp.path()).status.code(), Some(2));
    assert_eq!(vidpower(&["frobnicate"], tmp.path()).status.code(), Some(2));
}

#[test]
fn config_file_with_calibration_and_windows() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("measured.json"), vidpower::presets::MEASURED_CALIBRATION_JSON).unwrap();
    let cfg = r#"{"workload": {"video_fps": 30, "display": {"resolution": "FHD", "refresh_hz": 60}, "scheme": "baseline"},
                  "calibration": "measured.json"}"#;
    fs::write(tmp.path().join("run.json"), cfg).unwrap();
    let out = vidpower(&["simulate", "--config", "run.json", "--windows", "6", "--format", "json", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&tmp.path().join("o/report.json"));
    assert_eq!(r["windows"], 6);
    assert!((r["average_power_mw"].as_f64().unwrap() - 2162.0).abs() <= 1.0);
    assert!(!tmp.path().join("o/report.csv").exists());
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let read = |d: &str| -> Vec<Vec<u8>> {
        ["report.json", "report.csv", "timeline.csv", "timeline.svg"].iter().map(|f| fs::read(tmp.path().join(d).join(f)).unwrap()).collect()
    };
    vidpower(&["simulate", "--preset", "4k60-burstlink", "--out", "o"], tmp.path());
    let first = read("o");
    vidpower(&["simulate", "--preset", "4k60-burstlink", "--out", "o"], tmp.path());
    assert_eq!(first, read("o"));
}

fn reductions(rows: &Value, fps: u64) -> Vec<f64> {
    rows["rows"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|r| r["report"].as_object())
        .filter(|r| r["video_fps"] == fps && r["scheme"] == "burstlink")
        .map(|r| r["reference"]["reduction_pct"].as_f64().unwrap())
        .collect()
}

#[test]
fn schemes_sweep_trends() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vidpower(&["sweep", "--grid", "schemes", "--windows", "12", "--out", "s"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let s = json(&tmp.path().join("s/sweep.json"));
    let (r30, r60) = (reductions(&s, 30), reductions(&s, 60));
    assert_eq!(r30.len(), 4);
    assert!(r30.windows(2).all(|p| p[1] >= p[0]), "{r30:?}");
    assert!(r30.iter().zip(&r60).all(|(a, b)| b >= a), "{r30:?} {r60:?}");
    let csv = fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 33);
    assert!(csv.lines().next().unwrap().contains("reduction_pct"));
}

#[test]
fn single_point_sweep_matches_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"resolutions": ["4K"], "fps": [60], "schemes": ["burstlink"]}"#;
    fs::write(tmp.path().join("one.json"), cfg).unwrap();
    assert_eq!(vidpower(&["sweep", "--config", "one.json", "--out", "s"], tmp.path()).status.code(), Some(0));
    assert_eq!(vidpower(&["simulate", "--preset", "4k60-burstlink", "--out", "p"], tmp.path()).status.code(), Some(0));
    let mut swept = json(&tmp.path().join("s/sweep.json"))["rows"][0]["report"].clone();
    let mut single = json(&tmp.path().join("p/report.json"));
    single.as_object_mut().unwrap().remove("manifest");
    swept.as_object_mut().unwrap().remove("manifest");
    assert_eq!(swept, single);
}

#[test]
fn sweep_records_invalid_points_as_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"resolutions": ["FHD"], "fps": [45, 30], "schemes": ["baseline"]}"#;
    fs::write(tmp.path().join("g.json"), cfg).unwrap();
    let out = vidpower(&["sweep", "--config", "g.json", "--out", "s"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let s = json(&tmp.path().join("s/sweep.json"));
    assert!(s["rows"][0]["status"].as_str().unwrap().starts_with("skipped"));
    assert_eq!(s["rows"][1]["status"], "ok");
}

#[test]
fn empty_sweep_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("e.json"), r#"{"resolutions": [], "fps": [30], "schemes": ["baseline"]}"#).unwrap();
    assert_eq!(vidpower(&["sweep", "--config", "e.json"], tmp.path()).status.code(), Some(2));
}

fn energy_delta(dir: &Path) -> f64 {
    let c = json(&dir.join("compare.json"));
    c["deltas"].as_array().unwrap().iter().find(|d| d["metric"] == "energy_per_second_j").unwrap()["delta_pct"].as_f64().unwrap()
}

#[test]
fn compare_examples() {
    let tmp = tempfile::tempdir().unwrap();
    vidpower(&["compare", "4k60-baseline", "4k60-burstlink", "--out", "a"], tmp.path());
    let d = energy_delta(&tmp.path().join("a"));
    assert!((d + 41.0).abs() <= 3.0, "{d}");

    vidpower(&["compare", "4k60-baseline", "fbc-4k", "--out", "b"], tmp.path());
    let d = energy_delta(&tmp.path().join("b"));
    assert!((d + 9.0).abs() <= 3.0, "{d}");

    vidpower(&["compare", "4k60-baseline", "4k60-baseline", "--out", "c"], tmp.path());
    let c = json(&tmp.path().join("c/compare.json"));
    assert!(c["deltas"].as_array().unwrap().iter().all(|d| d["delta"].as_f64().unwrap() == 0.0));
}

#[test]
fn compare_mismatched_displays_warns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vidpower(&["compare", "fhd60-baseline", "4k60-baseline", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("display configs differ"));
    assert_eq!(json(&tmp.path().join("o/compare.json"))["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn calibrate_noiseless_synthetic_has_zero_residual() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vidpower(&["calibrate", "--synthetic", "30", "--noise", "0", "--seed", "3", "--out", "k"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&tmp.path().join("k/residuals.json"));
    assert!(r["fit"]["rms_residual_mw"].as_f64().unwrap() < 1e-6);
    assert_eq!(r["manifest"]["seed"], 3);
    let cal = vidpower::CalibrationSet::load(&tmp.path().join("k/calibration.json")).unwrap();
    let p = cal.profile(vidpower::Scheme::Baseline).unwrap();
    assert!((p.power_mw(vidpower::PackageCState::C8).unwrap() - 1285.0).abs() < 1e-6);

    // The runs file written alongside refits to the same powers.
    let again = vidpower(&["calibrate", "--runs", "k/runs.csv", "--out", "k2"], tmp.path());
    assert_eq!(again.status.code(), Some(0));
    let refit = vidpower::CalibrationSet::load(&tmp.path().join("k2/calibration.json")).unwrap();
    for s in [vidpower::PackageCState::C0, vidpower::PackageCState::C9] {
        let (a, b) = (p.power_mw(s).unwrap(), refit.profile(vidpower::Scheme::Baseline).unwrap().power_mw(s).unwrap());
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn calibrate_rank_deficient_input_reports_unidentifiable_states() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = "label,C0,C8,C9,power_mw\na,0.1,0.45,0.45,1500\nb,0.2,0.4,0.4,1800\nc,0.3,0.35,0.35,2200\n";
    fs::write(tmp.path().join("runs.csv"), runs).unwrap();
    let out = vidpower(&["calibrate", "--runs", "runs.csv", "--out", "k"], tmp.path());
    assert_ne!(out.status.code(), Some(0));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("under-determined") && err.contains("C8") && err.contains("C9"), "{err}");
}

#[test]
fn validate_grid_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vidpower(&["validate", "--out", "v"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&tmp.path().join("v/validate.json"));
    assert_eq!(v["configs"].as_array().unwrap().len(), 50);
    assert!(v["max_energy_dev_pct"].as_f64().unwrap() < 0.1);
    assert_eq!(v["pass"], true);
}
