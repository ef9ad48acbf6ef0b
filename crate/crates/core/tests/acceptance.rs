//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.
//!
//! Run with `cargo test -p vidpower --test acceptance -- --nocapture` to see
//! the lines.

use std::collections::BTreeMap;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use vidpower::calibrate::{fit_state_powers, holdout_accuracy, synthetic_runs};
use vidpower::model::{burst_transfer_time, frame_bytes, panel_stream_rate, validate_config, DisplayConfig};
use vidpower::power::{average_power, streaming_report, window_energy_breakdown};
use vidpower::report::{report_to_json, reports_to_csv};
use vidpower::scenarios::selective_update_bytes;
use vidpower::timeline::oracle::oracle_simulate_with;
use vidpower::timeline::{build_timelines, residencies, Residencies, WindowTimeline};
use vidpower::{presets, CalibrationSet, PackageCState, Resolution, Scheme, VideoKind, WorkloadSpec};

fn line(n: u32, ok: bool, detail: &str) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
}

fn res(pairs: &[(PackageCState, f64)]) -> Residencies {
    Residencies { states: pairs.iter().copied().collect(), transition_fraction: 0.0, total_ns: 1_000_000_000 }
}

#[test]
fn criterion_1_measured_average_power() {
    let cal = presets::measured_calibration();
    let base = average_power(
        cal.profile(Scheme::Baseline).unwrap(),
        &res(&[(PackageCState::C0, 0.09), (PackageCState::C2, 0.11), (PackageCState::C8, 0.80)]),
        &[],
    )
    .unwrap();
    let bl = average_power(
        cal.profile(Scheme::Burstlink).unwrap(),
        &res(&[(PackageCState::C0, 0.02), (PackageCState::C7, 0.19), (PackageCState::C9, 0.79)]),
        &[],
    )
    .unwrap();
    let sim = |name: &str| {
        let p = presets::preset(name).unwrap();
        streaming_report(&p.workload, &p.calibration.system, &p.calibration).unwrap().average_power_mw
    };
    let (sim_base, sim_bl) = (sim("measured-baseline"), sim("measured-burstlink"));
    let ok = [(base, 2162.0), (bl, 1274.0), (sim_base, 2162.0), (sim_bl, 1274.0)].iter().all(|(v, t)| (v - t).abs() <= 1.0);
    line(
        1,
        ok,
        &format!(
            "baseline {base:.2} mW (2162 ±1), burstlink {bl:.2} mW (1274 ±1); simulated presets {sim_base:.2} / {sim_bl:.2} mW"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_2_bandwidth_arithmetic() {
    let f = frame_bytes(Resolution::UHD_4K, 24).unwrap();
    let burst_ms = burst_transfer_time(Resolution::UHD_4K, 24, 25.92e9).unwrap() * 1e3;
    let gbps = panel_stream_rate(&DisplayConfig::new(Resolution::UHD_4K, 60)).unwrap() * 1e-9;
    let ok = f == 24_883_200 && (7.2..=7.8).contains(&burst_ms) && (11.3..=12.0).contains(&gbps);
    line(2, ok, &format!("4K frame {f} B, burst {burst_ms:.3} ms, stream {gbps:.3} Gbps"));
    assert!(ok);
}

/// Windows that cover one full period of frame repeats and batches.
fn period_windows(w: &WorkloadSpec) -> usize {
    let r = w.repeat_ratio() as usize;
    let b = w.overlay.batch_frames.max(1) as usize;
    (r * b).max(2)
}

fn energies(ws: &[WindowTimeline], w: &WorkloadSpec, cal: &CalibrationSet) -> Vec<f64> {
    ws.iter()
        .map(|win| {
            window_energy_breakdown(win, cal.profile(win.scheme).unwrap(), &cal.system, &w.display)
                .unwrap()
                .energy
                .total
        })
        .collect()
}

#[test]
fn criterion_3_oracle_equivalence() {
    let cal = presets::default_calibration();
    let grid = presets::oracle_grid();
    let t0 = Instant::now();
    let mut worst_e = 0.0f64;
    let mut worst_r = 0.0f64;
    let mut worst_at = String::from("all windows identical");
    for base in &grid {
        let mut w = base.clone();
        w.windows_to_simulate = Some(period_windows(&w));
        let a = build_timelines(&w, &cal.system, &cal).unwrap();
        let o = oracle_simulate_with(&w, &cal.system, &cal, 1e-6).unwrap();
        for (ea, eo) in energies(&a, &w, &cal).iter().zip(energies(&o, &w, &cal)) {
            let d = (ea - eo).abs() / ea;
            if d > worst_e {
                worst_e = d;
                worst_at = format!("{} {}/{} {:?}", w.scheme, w.display.resolution, w.video_fps, w.kind);
            }
        }
        let (ra, ro) = (residencies(&a), residencies(&o));
        for s in PackageCState::ALL {
            worst_r = worst_r.max((ra.get(s) - ro.get(s)).abs() * 100.0);
        }
        worst_r = worst_r.max((ra.transition_fraction - ro.transition_fraction).abs() * 100.0);
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = grid.len() == 50 && worst_e < 1e-3 && worst_r < 0.1 && secs < 120.0;
    line(
        3,
        ok,
        &format!(
            "{} configs, max energy deviation {:.5}% ({worst_at}), max residency deviation {worst_r:.5} pp, {secs:.1} s",
            grid.len(),
            worst_e * 100.0
        ),
    );
    assert!(ok);
}

fn config_strategy() -> impl Strategy<Value = WorkloadSpec> {
    let res = prop_oneof![
        Just(Resolution::FHD),
        Just(Resolution::QHD),
        Just(Resolution::UHD_4K),
        Just(Resolution::UHD_5K),
        (640u32..=3840, 360u32..=2160).prop_map(|(w, h)| Resolution::new(w & !7, h & !7)),
    ];
    let scheme = prop_oneof![Just(Scheme::Baseline), Just(Scheme::BypassOnly), Just(Scheme::BurstingOnly), Just(Scheme::Burstlink)];
    (
        res,
        prop_oneof![Just(30u32), Just(60)],
        prop_oneof![Just(1u32), Just(2), Just(4)],
        scheme,
        any::<bool>(),
        prop_oneof![Just(1.0f64), 0.3f64..1.0],
        prop_oneof![Just(1u32), 2u32..=4],
        (any::<bool>(), 0.0f64..=1.0),
        (any::<bool>(), any::<bool>(), 1usize..=6),
    )
        .prop_map(|(r, hz, div, scheme, vr, fbc, batch, (windowed, dirty), (gfx, psr_alt, periods))| {
            let fps = (hz / div).max(1);
            let mut w = WorkloadSpec::new(r, hz, fps, scheme);
            if vr {
                w.kind = VideoKind::Vr360;
            }
            w.overlay.fbc_ratio = fbc;
            w.overlay.batch_frames = batch;
            w.overlay.windowed = windowed;
            w.overlay.dirty_fraction = if windowed { dirty } else { 1.0 };
            w.overlay.plane_flags.graphics_interrupt = gfx;
            w.psr_alternate_windows = psr_alt;
            w.windows_to_simulate = Some((w.repeat_ratio() * batch) as usize * periods);
            w
        })
}

/// eDP bytes the window must carry, derived from the workload alone.
fn expected_edp(w: &WorkloadSpec, win: &WindowTimeline) -> u64 {
    let frame = w.display.frame_bytes().unwrap();
    let new = win.window_index % w.repeat_ratio() as usize == 0;
    match win.scheme {
        Scheme::Baseline if new || !w.psr_alternate_windows => frame,
        Scheme::Baseline => 0,
        _ if !new => 0,
        _ if w.overlay.windowed => {
            selective_update_bytes(&w.display, w.overlay.dirty_fraction, w.overlay.selective_header_bytes).unwrap()
        }
        _ => frame,
    }
}

fn check_invariants(w: &WorkloadSpec, cal: &CalibrationSet) -> Result<(), String> {
    let ws = build_timelines(w, &cal.system, cal).map_err(|e| format!("build: {e}"))?;
    for win in &ws {
        win.check_coverage().map_err(|e| e.to_string())?;
        let want = expected_edp(w, win);
        if win.edp_bytes() != want {
            return Err(format!("window {}: eDP {} bytes, expected {want}", win.window_index, win.edp_bytes()));
        }
        if !win.scheme.uses_dram_frame_buffer() {
            let encoded = (w.display.frame_bytes().unwrap() as f64 / w.stream_compression_ratio).round() as u64;
            let new = win.window_index % w.repeat_ratio() as usize == 0;
            if win.dram_write() != 0 || win.dram_read() > if new { encoded + 1 } else { 0 } {
                return Err(format!("window {}: decoded-frame DRAM traffic under {}", win.window_index, win.scheme));
            }
        }
    }
    let r = residencies(&ws);
    if (r.total() - 1.0).abs() > 1e-9 {
        return Err(format!("residencies sum to {}", r.total()));
    }
    let mut identity = w.clone();
    identity.overlay.fbc_ratio = 1.0;
    identity.overlay.batch_frames = 1;
    identity.overlay.windowed = false;
    identity.overlay.dirty_fraction = 1.0;
    let mut explicit = identity.clone();
    explicit.overlay.batch_cached_fraction = 0.5;
    explicit.overlay.batch_decode_boost = 3.0;
    explicit.overlay.selective_header_bytes = 999;
    let a = streaming_report(&identity, &cal.system, cal).map_err(|e| e.to_string())?;
    let b = streaming_report(&explicit, &cal.system, cal).map_err(|e| e.to_string())?;
    if report_to_json(&a) != report_to_json(&b) {
        return Err("identity overlay changed the report".into());
    }
    Ok(())
}

#[test]
fn criterion_4_structural_invariants() {
    let cal = presets::default_calibration();
    let config = Config { cases: 1400, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let valid = std::cell::Cell::new(0usize);
    let outcome = runner.run(&config_strategy(), |w| {
        if !validate_config(&w, &cal.system).is_empty() {
            return Ok(());
        }
        valid.set(valid.get() + 1);
        check_invariants(&w, &cal).map_err(|e| TestCaseError::fail(format!("{e}; config {w:?}")))
    });
    let ok = outcome.is_ok() && valid.get() >= 1000;
    line(4, ok, &format!("{} valid random configs checked{}", valid.get(), outcome.as_ref().err().map(|e| format!(": {e}")).unwrap_or_default()));
    assert!(ok);
}

#[test]
fn criterion_5_orderings_and_trends() {
    let cal = presets::default_calibration();
    let mut bad = Vec::new();
    let mut red: BTreeMap<(usize, u32), f64> = BTreeMap::new();
    for (i, (label, r)) in Resolution::PRESETS.into_iter().enumerate() {
        for fps in [30, 60] {
            let e: BTreeMap<Scheme, f64> = Scheme::ALL
                .into_iter()
                .map(|s| (s, streaming_report(&WorkloadSpec::new(r, 60, fps, s), &cal.system, &cal).unwrap().energy_per_second_j.total))
                .collect();
            let tag = format!("{label}/{fps}");
            if !(e[&Scheme::Burstlink] < e[&Scheme::BypassOnly] && e[&Scheme::BypassOnly] < e[&Scheme::Baseline]) {
                bad.push(format!("{tag}: burstlink < bypass_only < baseline broken"));
            }
            if !(e[&Scheme::BurstingOnly] < e[&Scheme::Baseline]) {
                bad.push(format!("{tag}: bursting_only >= baseline"));
            }
            red.insert((i, fps), (1.0 - e[&Scheme::Burstlink] / e[&Scheme::Baseline]) * 100.0);
        }
    }
    for fps in [30, 60] {
        for i in 1..Resolution::PRESETS.len() {
            if red[&(i, fps)] < red[&(i - 1, fps)] {
                bad.push(format!("{fps}FPS reduction falls from {} to {}", Resolution::PRESETS[i - 1].0, Resolution::PRESETS[i].0));
            }
        }
    }
    for i in 0..Resolution::PRESETS.len() {
        if red[&(i, 60)] < red[&(i, 30)] {
            bad.push(format!("{}: 60FPS reduction below 30FPS", Resolution::PRESETS[i].0));
        }
    }
    let summary: Vec<String> =
        red.iter().map(|((i, fps), r)| format!("{}/{fps}={r:.2}%", Resolution::PRESETS[*i].0)).collect();
    line(5, bad.is_empty(), &format!("reductions {}{}", summary.join(" "), if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }));
    assert!(bad.is_empty());
}

fn reduction(w: &WorkloadSpec, cal: &CalibrationSet) -> f64 {
    streaming_report(w, &cal.system, cal).unwrap().reference.unwrap().reduction_pct
}

#[test]
fn criterion_6_calibration_targets() {
    let cal = presets::default_calibration();
    let got = [
        ("4K/60 burstlink", reduction(&WorkloadSpec::new(Resolution::UHD_4K, 60, 60, Scheme::Burstlink), &cal), 41.0),
        ("FHD/30 burstlink", reduction(&WorkloadSpec::new(Resolution::FHD, 60, 30, Scheme::Burstlink), &cal), 37.0),
        ("FBC 0.5 4K/60", reduction(&presets::fbc_workload(), &cal), 9.0),
        ("batching 4K/60", reduction(&presets::batching_workload(), &cal), 6.0),
    ];
    let ok = got.iter().all(|(_, v, t)| (v - t).abs() <= 3.0);
    let detail: Vec<String> = got.iter().map(|(n, v, t)| format!("{n} {v:.2}% ({t} ±3)")).collect();
    line(6, ok, &detail.join(", "));
    assert!(ok);
}

#[test]
fn criterion_7_calibration_methodology() {
    let states = [PackageCState::C0, PackageCState::C2, PackageCState::C7, PackageCState::C8, PackageCState::C9];
    let truth = presets::measured_calibration().profile(Scheme::Baseline).unwrap().clone();
    let clean = synthetic_runs(&truth, &states, 50, 0.0, 2024).unwrap();
    let fit = fit_state_powers(&clean, &states).unwrap();
    let max_err = states
        .iter()
        .map(|s| (fit.powers[s] - truth.power_mw(*s).unwrap()).abs() / truth.power_mw(*s).unwrap())
        .fold(0.0f64, f64::max);
    let noisy = synthetic_runs(&truth, &states, 400, 0.02, 2025).unwrap();
    let (_, acc) = holdout_accuracy(&noisy, &states, 200).unwrap();
    let ok = max_err < 1e-9 && fit.rms_residual_mw < 1e-6 && acc.overall_pct >= 96.0;
    line(
        7,
        ok,
        &format!("noiseless max relative error {max_err:.2e}, held-out accuracy at 2% noise {:.2}%", acc.overall_pct),
    );
    assert!(ok);
}

#[test]
fn criterion_8_determinism() {
    let mut names: Vec<String> = presets::NAMED.iter().map(|s| s.to_string()).collect();
    for r in ["fhd", "qhd", "4k", "5k"] {
        for fps in [30, 60] {
            for s in ["baseline", "bypass", "bursting", "burstlink"] {
                names.push(format!("{r}{fps}-{s}"));
            }
        }
    }
    let render = |name: &str| -> (String, String) {
        let p = presets::preset(name).unwrap();
        let r = streaming_report(&p.workload, &p.calibration.system, &p.calibration).unwrap();
        (report_to_json(&r), reports_to_csv(&[(name.to_string(), r)]).unwrap())
    };
    let mut differing = Vec::new();
    for n in &names {
        if render(n) != render(n) {
            differing.push(n.clone());
        }
    }
    line(8, differing.is_empty(), &format!("{} presets rendered twice, {} differ", names.len(), differing.len()));
    assert!(differing.is_empty());
}
