//! Shipped calibrations and named workload presets.

use std::collections::BTreeMap;

use crate::cstates::{CalibrationSet, PackageCState, PowerProfile, StatePower, TransitionEntry, TransitionSpec};
use crate::error::{Error, Result};
use crate::model::{DramBackground, Resolution, Scheme, SystemConfig, VideoKind, WorkloadSpec};

pub const DEFAULT_CALIBRATION_JSON: &str = include_str!("../../../calibrations/default.json");
pub const MEASURED_CALIBRATION_JSON: &str = include_str!("../../../calibrations/measured.json");

pub const GAMING_TRACE: &str = include_str!("../../../traces/gaming.csv");
pub const CONFERENCING_TRACE: &str = include_str!("../../../traces/conferencing.csv");
pub const PRODUCTIVITY_TRACE: &str = include_str!("../../../traces/productivity.csv");

/// The fitted calibration used unless another file is given.
pub fn default_calibration() -> CalibrationSet {
    CalibrationSet::from_json(DEFAULT_CALIBRATION_JSON).expect("shipped default calibration is valid")
}

/// Per-state powers exactly as measured and estimated for the FHD reference
/// system, with every adder, DRAM coefficient and latency at zero.
pub fn measured_calibration() -> CalibrationSet {
    CalibrationSet::from_json(MEASURED_CALIBRATION_JSON).expect("shipped measured calibration is valid")
}

type Split = (PackageCState, f64, f64, f64);

// (state, total, display, dram background) in mW.
const BASELINE_STATES: [Split; 9] = [
    (PackageCState::C0, 5940.0, 1100.0, 400.0),
    (PackageCState::C2, 5445.0, 1100.0, 400.0),
    (PackageCState::C3, 3500.0, 1100.0, 30.0),
    (PackageCState::C6, 2000.0, 1100.0, 30.0),
    (PackageCState::C7, 1385.0, 1100.0, 30.0),
    (PackageCState::C7P, 1290.0, 1100.0, 30.0),
    (PackageCState::C8, 1285.0, 1100.0, 30.0),
    (PackageCState::C9, 1090.0, 967.0, 30.0),
    (PackageCState::C10, 400.0, 0.0, 30.0),
];

const BURSTLINK_STATES: [Split; 9] = [
    (PackageCState::C0, 6090.0, 1250.0, 400.0),
    (PackageCState::C2, 5740.0, 1250.0, 400.0),
    (PackageCState::C3, 3650.0, 1250.0, 30.0),
    (PackageCState::C6, 2150.0, 1250.0, 30.0),
    (PackageCState::C7, 1530.0, 1250.0, 30.0),
    (PackageCState::C7P, 1435.0, 1250.0, 30.0),
    (PackageCState::C8, 1435.0, 1250.0, 30.0),
    (PackageCState::C9, 1090.0, 967.0, 30.0),
    (PackageCState::C10, 400.0, 0.0, 30.0),
];

fn states(rows: &[Split]) -> BTreeMap<PackageCState, StatePower> {
    rows.iter()
        .map(|&(s, total, display, bg)| {
            (
                s,
                StatePower {
                    power_mw: total,
                    dram_background_mw: bg,
                    display_mw: display,
                    others_mw: total - display - bg,
                    dram_state: None,
                },
            )
        })
        .collect()
}

/// Pairs that touch C8 or deeper pay `entry`/`exit` latency at the higher of
/// the two state powers; moves among the shallower states are free.
fn pair_transitions(rows: &[Split], entry_s: f64, exit_s: f64) -> Vec<TransitionEntry> {
    let mut out = Vec::new();
    for a in rows {
        for b in rows {
            if a.0 == b.0 {
                continue;
            }
            let cost = if a.0.max(b.0) < PackageCState::C8 {
                TransitionSpec::ZERO
            } else {
                let p = a.1.max(b.1);
                TransitionSpec { entry_power_mw: p, entry_latency_s: entry_s, exit_power_mw: p, exit_latency_s: exit_s }
            };
            out.push(TransitionEntry { from: a.0, to: b.0, cost });
        }
    }
    out
}

fn profile(rows: &[Split], transitions: Vec<TransitionEntry>, default_transition: TransitionSpec) -> PowerProfile {
    PowerProfile {
        states: states(rows),
        transitions,
        default_transition,
        drfb_active_power_adder_mw: 0.0,
        panel_power_per_mpixel_mw: 0.0,
        panel_reference_pixels: Resolution::FHD.pixels(),
        gpu_active_power_mw: 0.0,
        fbc_compute_power_mw: 0.0,
    }
}

fn scheme_map() -> BTreeMap<Scheme, String> {
    [
        (Scheme::Baseline, "baseline"),
        (Scheme::BurstingOnly, "baseline"),
        (Scheme::BypassOnly, "burstlink"),
        (Scheme::Burstlink, "burstlink"),
    ]
    .into_iter()
    .map(|(s, n)| (s, n.to_string()))
    .collect()
}

/// FHD reference system: 2 ms driver work plus 1 ms decode per frame, DC fetch
/// sized for 11% C2 residency, decoder-fed link at 38% of a window.
pub fn measured_system() -> SystemConfig {
    SystemConfig {
        dc_buffer_bytes: 524_288,
        dram_fetch_bandwidth: 2.96417e9,
        decode_rate: 6.2208e9,
        lowpower_decode_rate: Some(982_231_579.0),
        gpu_pt_rate: 6.2208e9,
        orchestration_time: 2.0e-3,
        offload_orchestration_time: 0.33333e-3,
        repeat_orchestration_time: 0.33333e-3,
        dram_coeff_read: 0.0,
        dram_coeff_write: 0.0,
        dram_background_power: DramBackground { active: 0.4, fast_powerdown: 0.15, self_refresh: 0.03 },
        dram_capacity_bytes: 8 << 30,
    }
}

pub fn build_measured_calibration() -> CalibrationSet {
    let mut profiles = BTreeMap::new();
    profiles.insert("baseline".to_string(), profile(&BASELINE_STATES, Vec::new(), TransitionSpec::ZERO));
    profiles.insert("burstlink".to_string(), profile(&BURSTLINK_STATES, Vec::new(), TransitionSpec::ZERO));
    CalibrationSet {
        name: "measured".into(),
        description: "Per-state powers of the FHD reference system; zero latencies, DRAM coefficients and adders".into(),
        profiles,
        schemes: scheme_map(),
        system: measured_system(),
    }
}

/// Starting point for the default-calibration fit. The fitted values
/// overwrite the system rates, DRAM coefficients and adders.
pub fn seed_calibration() -> CalibrationSet {
    let entry = 0.5e-6;
    let exit = 1e-6;
    let mut profiles = BTreeMap::new();
    let fallback = TransitionSpec { entry_power_mw: 6090.0, entry_latency_s: entry, exit_power_mw: 6090.0, exit_latency_s: exit };
    for (name, rows) in [("baseline", &BASELINE_STATES), ("burstlink", &BURSTLINK_STATES)] {
        let mut p = profile(rows, pair_transitions(rows, entry, exit), fallback);
        p.drfb_active_power_adder_mw = 58.0;
        p.panel_power_per_mpixel_mw = 80.0;
        p.gpu_active_power_mw = 300.0;
        p.fbc_compute_power_mw = 150.0;
        profiles.insert(name.to_string(), p);
    }
    CalibrationSet {
        name: "default".into(),
        description: "Fitted default: reference state powers plus DRAM coefficients, panel and compute adders and \
                      system rates chosen to hit the target reductions"
            .into(),
        profiles,
        schemes: scheme_map(),
        system: SystemConfig {
            dc_buffer_bytes: 524_288,
            dram_fetch_bandwidth: 8.5e9,
            decode_rate: 3.1e10,
            lowpower_decode_rate: None,
            gpu_pt_rate: 2.0e10,
            orchestration_time: 2.2e-3,
            offload_orchestration_time: 0.75e-3,
            repeat_orchestration_time: 0.08e-3,
            dram_coeff_read: 5e-11,
            dram_coeff_write: 5e-11,
            dram_background_power: DramBackground { active: 0.4, fast_powerdown: 0.15, self_refresh: 0.03 },
            dram_capacity_bytes: 8 << 30,
        },
    }
}

/// A workload together with the calibration it is meant to run against.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub workload: WorkloadSpec,
    pub calibration: CalibrationSet,
}

pub const FBC_RATIO: f64 = 0.5;
pub const BATCH_FRAMES: u32 = 4;
pub const BATCH_DECODE_BOOST: f64 = 1.25;

/// Names accepted by [`preset`] besides the `<res><fps>-<scheme>` family.
pub const NAMED: [&str; 6] = ["measured-baseline", "measured-burstlink", "fbc-4k", "batching-4k", "vr-4k-baseline", "vr-4k-burstlink"];

pub fn measured_workload(scheme: Scheme) -> WorkloadSpec {
    let mut w = WorkloadSpec::new(Resolution::FHD, 60, 30, scheme);
    w.windows_to_simulate = Some(60);
    w
}

pub fn fbc_workload() -> WorkloadSpec {
    let mut w = WorkloadSpec::new(Resolution::UHD_4K, 60, 60, Scheme::Baseline);
    w.overlay.fbc_ratio = FBC_RATIO;
    w
}

pub fn batching_workload() -> WorkloadSpec {
    let mut w = WorkloadSpec::new(Resolution::UHD_4K, 60, 60, Scheme::Baseline);
    w.overlay.batch_frames = BATCH_FRAMES;
    w.overlay.batch_decode_boost = BATCH_DECODE_BOOST;
    w
}

pub fn vr_workload(scheme: Scheme) -> WorkloadSpec {
    let mut w = WorkloadSpec::new(Resolution::UHD_4K, 60, 30, scheme);
    w.kind = VideoKind::Vr360;
    w
}

/// Parses `fhd30-burstlink`, `4k60-baseline`, `qhd30-bypass` and friends.
pub fn parametric(name: &str) -> Option<WorkloadSpec> {
    let (head, scheme) = name.split_once('-')?;
    let scheme = Scheme::parse(scheme).ok()?;
    let split = head.len().checked_sub(2)?;
    let (res, fps) = head.split_at(split);
    let fps: u32 = fps.parse().ok()?;
    let res = Resolution::parse(res).ok()?;
    Some(WorkloadSpec::new(res, 60, fps, scheme))
}

pub fn preset(name: &str) -> Result<Preset> {
    let key = name.trim().to_ascii_lowercase();
    let (workload, calibration) = match key.as_str() {
        "measured-baseline" => (measured_workload(Scheme::Baseline), measured_calibration()),
        "measured-burstlink" => (measured_workload(Scheme::Burstlink), measured_calibration()),
        "fbc-4k" => (fbc_workload(), default_calibration()),
        "batching-4k" => (batching_workload(), default_calibration()),
        "vr-4k-baseline" => (vr_workload(Scheme::Baseline), default_calibration()),
        "vr-4k-burstlink" => (vr_workload(Scheme::Burstlink), default_calibration()),
        other => match parametric(other) {
            Some(w) => (w, default_calibration()),
            None => {
                return Err(Error::InvalidConfig(format!(
                    "unknown preset '{name}'; try one of {} or <res><fps>-<scheme> such as 4k60-burstlink",
                    NAMED.join(", ")
                )))
            }
        },
    };
    Ok(Preset { name: key, workload, calibration })
}

/// Resolutions × {30, 60} FPS × all schemes, 60 Hz panel.
pub fn scheme_grid() -> Vec<WorkloadSpec> {
    let mut out = Vec::new();
    for (_, res) in Resolution::PRESETS {
        for fps in [30, 60] {
            for s in Scheme::ALL {
                out.push(WorkloadSpec::new(res, 60, fps, s));
            }
        }
    }
    out
}

/// The scheme grid, VR variants of every scheme at every resolution (30 FPS),
/// the FBC and the batching workloads: 50 configurations.
pub fn oracle_grid() -> Vec<WorkloadSpec> {
    let mut out = scheme_grid();
    for (_, res) in Resolution::PRESETS {
        for s in Scheme::ALL {
            let mut w = WorkloadSpec::new(res, 60, 30, s);
            w.kind = VideoKind::Vr360;
            out.push(w);
        }
    }
    out.push(fbc_workload());
    out.push(batching_workload());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_measured_matches_builder() {
        assert_eq!(measured_calibration(), build_measured_calibration());
    }

    #[test]
    fn shipped_calibrations_validate() {
        default_calibration().validate().unwrap();
        seed_calibration().validate().unwrap();
    }

    #[test]
    fn parametric_names() {
        let w = parametric("4k60-burstlink").unwrap();
        assert_eq!(w.display.resolution, Resolution::UHD_4K);
        assert_eq!(w.video_fps, 60);
        assert_eq!(w.scheme, Scheme::Burstlink);
        let w = parametric("fhd30-bypass").unwrap();
        assert_eq!(w.scheme, Scheme::BypassOnly);
        assert!(parametric("fhd-baseline").is_none());
        assert!(preset("nope").is_err());
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(scheme_grid().len(), 32);
        assert_eq!(oracle_grid().len(), 50);
    }

    #[test]
    fn every_named_preset_builds() {
        for n in NAMED {
            let p = preset(n).unwrap();
            assert!(crate::model::validate_config(&p.workload, &p.calibration.system).is_empty(), "{n}");
        }
    }
}
