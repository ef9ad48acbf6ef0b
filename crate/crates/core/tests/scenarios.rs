use vidpower::scenarios::{apply_batching, apply_fbc, parse_trace, single_plane_burst};
use vidpower::{presets, Error, Resolution, Scheme, WorkloadSpec};

fn fhd60() -> WorkloadSpec {
    let mut w = WorkloadSpec::new(Resolution::FHD, 60, 60, Scheme::BurstingOnly);
    w.windows_to_simulate = Some(120);
    w
}

#[test]
fn gaming_trace_lands_in_range() {
    let cal = presets::default_calibration();
    let trace = parse_trace(presets::GAMING_TRACE).unwrap();
    let r = single_plane_burst(&fhd60(), &trace, &cal.system, &cal).unwrap();
    let red = r.reference.unwrap().reduction_pct;
    assert!((25.0..=30.0).contains(&red), "gaming reduction {red}");
}

#[test]
fn shipped_traces_all_save_energy() {
    let cal = presets::default_calibration();
    for text in [presets::GAMING_TRACE, presets::CONFERENCING_TRACE, presets::PRODUCTIVITY_TRACE] {
        let trace = parse_trace(text).unwrap();
        assert_eq!(trace.len(), 120);
        let r = single_plane_burst(&fhd60(), &trace, &cal.system, &cal).unwrap();
        assert!(r.reference.unwrap().reduction_pct > 20.0);
    }
}

#[test]
fn fbc_cuts_energy_and_identity_ratio_is_a_no_op() {
    let cal = presets::default_calibration();
    let w = WorkloadSpec::new(Resolution::UHD_4K, 60, 60, Scheme::Baseline);
    let (same, _) = apply_fbc(&w, 1.0).unwrap();
    assert_eq!(same, w);
    let (half, _) = apply_fbc(&w, 0.5).unwrap();
    let a = vidpower::power::streaming_report(&w, &cal.system, &cal).unwrap();
    let b = vidpower::power::streaming_report(&half, &cal.system, &cal).unwrap();
    assert!(b.energy_per_second_j.total < a.energy_per_second_j.total);
    assert!(b.dram_read_bytes < a.dram_read_bytes);
}

#[test]
fn batching_past_buffer_capacity_is_infeasible() {
    let cal = presets::default_calibration();
    let w = WorkloadSpec::new(Resolution::UHD_5K, 60, 60, Scheme::Baseline);
    let fits = (cal.system.dram_capacity_bytes / w.display.frame_bytes().unwrap()) as u32;
    assert!(apply_batching(&w, &cal.system, fits, 0.34, 1.25).is_ok());
    assert!(matches!(apply_batching(&w, &cal.system, fits + 1, 0.34, 1.25), Err(Error::Infeasible(_))));
}
