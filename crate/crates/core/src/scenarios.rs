//! Overlays on the base schemes: frame-buffer compression, frame batching,
//! selective update for windowed video, single-plane bursting and the
//! destination selector.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cstates::CalibrationSet;
use crate::error::{Error, Result};
use crate::model::{DisplayConfig, Scheme, SystemConfig, Violation, WorkloadSpec};
use crate::power::{self, EnergyReport};
use crate::timeline::{self, plan, WindowTimeline};

/// Conditions the destination selector inspects before offloading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaneFlags {
    pub video_plane_only: bool,
    pub single_video: bool,
    pub graphics_interrupt: bool,
    pub user_input_interrupt: bool,
    pub multiple_displays: bool,
}

impl Default for PlaneFlags {
    fn default() -> Self {
        PlaneFlags {
            video_plane_only: true,
            single_video: true,
            graphics_interrupt: false,
            user_input_interrupt: false,
            multiple_displays: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioOverlay {
    /// Compressed size over raw size; 1 disables compression.
    pub fbc_ratio: f64,
    pub batch_frames: u32,
    /// Share of decoded-frame traffic served from cache while batching.
    pub batch_cached_fraction: f64,
    /// Decoder speed-up while a batch is decoded.
    pub batch_decode_boost: f64,
    /// Video in a window: composed conventionally first, then selective updates.
    pub windowed: bool,
    pub dirty_fraction: f64,
    /// Conventional windows before selective update takes over.
    pub stage1_windows: u32,
    pub selective_header_bytes: u64,
    pub plane_flags: PlaneFlags,
}

impl Default for ScenarioOverlay {
    fn default() -> Self {
        ScenarioOverlay {
            fbc_ratio: 1.0,
            batch_frames: 1,
            batch_cached_fraction: 0.34,
            batch_decode_boost: 1.0,
            windowed: false,
            dirty_fraction: 1.0,
            stage1_windows: 2,
            selective_header_bytes: 128,
            plane_flags: PlaneFlags::default(),
        }
    }
}

pub(crate) fn validate_overlay(w: &WorkloadSpec, s: &SystemConfig, v: &mut Vec<Violation>) {
    let o = &w.overlay;
    if !(o.fbc_ratio > 0.0 && o.fbc_ratio <= 1.0) {
        v.push(Violation::new("overlay.fbc_ratio_range", format!("fbc_ratio {} outside (0, 1]", o.fbc_ratio)));
    }
    if o.batch_frames == 0 {
        v.push(Violation::new("overlay.batch_zero", "batch_frames must be at least 1"));
    }
    if !(0.0..=1.0).contains(&o.dirty_fraction) {
        v.push(Violation::new("overlay.dirty_fraction_range", format!("dirty_fraction {} outside [0, 1]", o.dirty_fraction)));
    }
    if !(0.0..1.0).contains(&o.batch_cached_fraction) {
        v.push(Violation::new("overlay.cached_fraction_range", format!("batch_cached_fraction {} outside [0, 1)", o.batch_cached_fraction)));
    }
    if !(o.batch_decode_boost > 0.0 && o.batch_decode_boost.is_finite()) {
        v.push(Violation::new("overlay.boost_nonpositive", format!("batch_decode_boost {}", o.batch_decode_boost)));
    }
    if o.windowed && !w.display.panel_psr2_capable {
        v.push(Violation::new("overlay.windowed_requires_psr2", "selective update needs a PSR2 panel"));
    }
    if let Ok(f) = w.display.frame_bytes() {
        if (o.batch_frames as u64).saturating_mul(f) > s.dram_capacity_bytes {
            v.push(Violation::new(
                "overlay.batch_exceeds_capacity",
                format!("{} decoded frames do not fit in {} bytes of DRAM", o.batch_frames, s.dram_capacity_bytes),
            ));
        }
    }
}

/// Destination selector: offload only a lone full-screen video on a panel
/// with a double frame buffer, otherwise fall back to the conventional path.
pub fn select_scheme(flags: &PlaneFlags, requested: Scheme, display: &DisplayConfig) -> Scheme {
    match requested {
        Scheme::BypassOnly | Scheme::Burstlink => {
            let ok = flags.video_plane_only
                && flags.single_video
                && !flags.graphics_interrupt
                && !flags.user_input_interrupt
                && !flags.multiple_displays
                && display.drfb_present;
            if ok {
                requested
            } else {
                Scheme::Baseline
            }
        }
        other => other,
    }
}

/// Link payload of one selective update.
pub fn selective_update_bytes(display: &DisplayConfig, dirty_fraction: f64, header_bytes: u64) -> Result<u64> {
    if !display.panel_psr2_capable {
        return Err(Error::UnsupportedScheme("selective update needs a PSR2-capable panel".into()));
    }
    if !(0.0..=1.0).contains(&dirty_fraction) {
        return Err(Error::InvalidConfig(format!("dirty_fraction {dirty_fraction} outside [0, 1]")));
    }
    let f = display.frame_bytes()?;
    if dirty_fraction == 1.0 {
        return Ok(f);
    }
    Ok((f as f64 * dirty_fraction).round() as u64 + header_bytes)
}

/// Warnings for overlays that have no effect under the workload's scheme.
pub fn overlay_warnings(w: &WorkloadSpec) -> Vec<String> {
    let mut out = Vec::new();
    let offloaded = !w.scheme.uses_dram_frame_buffer();
    if w.overlay.fbc_ratio < 1.0 && offloaded {
        out.push(format!("fbc_ratio {} ignored: {} does not store decoded frames in DRAM", w.overlay.fbc_ratio, w.scheme));
    }
    if w.overlay.batch_frames > 1 && offloaded {
        out.push(format!("batch_frames {} ignored: {} decodes frame by frame", w.overlay.batch_frames, w.scheme));
    }
    let selected = select_scheme(&w.overlay.plane_flags, w.scheme, &w.display);
    if selected != w.scheme {
        out.push(format!("destination selector fell back from {} to {}", w.scheme, selected));
    }
    out
}

/// Sets frame-buffer compression. Schemes that bypass DRAM are returned
/// unchanged with a warning.
pub fn apply_fbc(w: &WorkloadSpec, fbc_ratio: f64) -> Result<(WorkloadSpec, Vec<String>)> {
    if !(fbc_ratio > 0.0 && fbc_ratio <= 1.0) {
        return Err(Error::InvalidConfig(format!("fbc_ratio {fbc_ratio} outside (0, 1]")));
    }
    if !w.scheme.uses_dram_frame_buffer() {
        let msg = format!("fbc_ratio {fbc_ratio} ignored: {} does not store decoded frames in DRAM", w.scheme);
        return Ok((w.clone(), vec![msg]));
    }
    let mut out = w.clone();
    out.overlay.fbc_ratio = fbc_ratio;
    Ok((out, Vec::new()))
}

/// Decodes `batch_frames` frames back to back in one window.
pub fn apply_batching(
    w: &WorkloadSpec,
    sys: &SystemConfig,
    batch_frames: u32,
    cached_fraction: f64,
    decode_boost: f64,
) -> Result<WorkloadSpec> {
    if batch_frames == 0 {
        return Err(Error::InvalidConfig("batch_frames must be at least 1".into()));
    }
    let f = w.display.frame_bytes()?;
    if (batch_frames as u64).saturating_mul(f) > sys.dram_capacity_bytes {
        return Err(Error::Infeasible(format!(
            "{batch_frames} decoded frames ({} bytes) exceed DRAM capacity {}",
            batch_frames as u64 * f,
            sys.dram_capacity_bytes
        )));
    }
    let mut out = w.clone();
    out.overlay.batch_frames = batch_frames;
    out.overlay.batch_cached_fraction = cached_fraction;
    out.overlay.batch_decode_boost = decode_boost;
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    window_index: usize,
    dirty_fraction: f64,
}

/// Reads a dirty-fraction trace: `window_index,dirty_fraction`, one row per window.
pub fn parse_trace(text: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<TraceRow>().enumerate() {
        let row = row?;
        if row.window_index != i {
            return Err(Error::Input(format!("trace row {i} has window_index {}", row.window_index)));
        }
        if !(0.0..=1.0).contains(&row.dirty_fraction) {
            return Err(Error::Input(format!("window {i}: dirty_fraction {} outside [0, 1]", row.dirty_fraction)));
        }
        out.push(row.dirty_fraction);
    }
    if out.is_empty() {
        return Err(Error::Input("trace has no rows".into()));
    }
    Ok(out)
}

pub fn load_trace(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    parse_trace(&text)
}

fn single_plane_workload(w: &WorkloadSpec, trace: &[f64], sys: &SystemConfig) -> Result<WorkloadSpec> {
    if trace.is_empty() {
        return Err(Error::Input("single-plane burst needs a non-empty dirty-fraction trace".into()));
    }
    let mut bw = w.clone();
    bw.scheme = Scheme::BurstingOnly;
    bw.video_fps = w.display.refresh_hz;
    bw.windows_to_simulate = Some(trace.len());
    bw.overlay = ScenarioOverlay::default();
    let v = crate::model::validate_config(&bw, sys);
    if !v.is_empty() {
        return Err(Error::Violations(v));
    }
    Ok(bw)
}

fn single_plane_windows(bw: &WorkloadSpec, trace: &[f64], sys: &SystemConfig, cal: &CalibrationSet) -> Result<Vec<WindowTimeline>> {
    let payload = trace
        .iter()
        .map(|&d| selective_update_bytes(&bw.display, d, bw.overlay.selective_header_bytes))
        .collect::<Result<Vec<_>>>()?;
    let plans = plan::plan_with_work(bw, sys, trace, Some(&payload))?;
    timeline::build_from_plans(&plans, |s| cal.profile(s))
}

/// Bursting timelines for a single-plane workload driven by a dirty-fraction trace.
pub fn single_plane_timelines(w: &WorkloadSpec, trace: &[f64], sys: &SystemConfig, cal: &CalibrationSet) -> Result<Vec<WindowTimeline>> {
    let bw = single_plane_workload(w, trace, sys)?;
    single_plane_windows(&bw, trace, sys, cal)
}

/// Frame-bursting for a single-plane workload that renders `trace[i]` of a
/// frame in window `i`, compared against conventional streaming of the same
/// work. The workload's refresh rate and display are used; one frame per window.
pub fn single_plane_burst(w: &WorkloadSpec, trace: &[f64], sys: &SystemConfig, cal: &CalibrationSet) -> Result<EnergyReport> {
    let bw = single_plane_workload(w, trace, sys)?;
    let windows = single_plane_windows(&bw, trace, sys, cal)?;
    let mut report = power::summarize(&bw, sys, cal, &windows)?;

    let rw = bw.with_scheme(Scheme::Baseline);
    let ref_plans = plan::plan_with_work(&rw, sys, trace, None)?;
    let ref_windows = timeline::build_from_plans(&ref_plans, |s| cal.profile(s))?;
    let r = power::summarize(&rw, sys, cal, &ref_windows)?;
    report.reference = Some(power::compare(&report, &r));
    report.notes.push("single-plane workload: per-window render work and burst payload follow the dirty-fraction trace".into());
    Ok(report)
}
