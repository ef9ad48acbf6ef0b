//! Browser bindings: a timeline renderer, a four-scheme comparison and the
//! link bandwidth arithmetic, all on the shipped default calibration.

use serde_json::json;
use vidpower::model::{burst_transfer_time, panel_stream_rate};
use vidpower::power::streaming_report;
use vidpower::timeline::build_timelines;
use vidpower::timeline::export::timeline_svg;
use vidpower::{presets, DisplayConfig, Resolution, Scheme, VideoKind, WorkloadSpec};
use wasm_bindgen::prelude::*;

const MAX_WINDOWS: u32 = 240;

fn workload(resolution: &str, fps: u32, scheme: &str, vr: bool, windows: u32) -> Result<WorkloadSpec, String> {
    let res = Resolution::parse(resolution).map_err(|e| e.to_string())?;
    let scheme = Scheme::parse(scheme).map_err(|e| e.to_string())?;
    let mut w = WorkloadSpec::new(res, 60, fps, scheme);
    if vr {
        w.kind = VideoKind::Vr360;
    }
    w.windows_to_simulate = Some(windows.clamp(1, MAX_WINDOWS) as usize);
    Ok(w)
}

pub fn render_timeline(resolution: &str, fps: u32, scheme: &str, vr: bool, windows: u32) -> Result<String, String> {
    let cal = presets::default_calibration();
    let w = workload(resolution, fps, scheme, vr, windows)?;
    let tl = build_timelines(&w, &cal.system, &cal).map_err(|e| e.to_string())?;
    let title = format!("{} {} {} FPS{}", w.scheme, w.display.resolution, fps, if vr { " VR" } else { "" });
    Ok(timeline_svg(&tl, &title, tl.len()))
}

pub fn scheme_comparison(resolution: &str, fps: u32, vr: bool) -> Result<String, String> {
    let cal = presets::default_calibration();
    let mut rows = Vec::new();
    for s in Scheme::ALL {
        let w = workload(resolution, fps, s.name(), vr, 12)?;
        let r = streaming_report(&w, &cal.system, &cal).map_err(|e| e.to_string())?;
        let e = r.energy_per_second_j;
        rows.push(json!({
            "scheme": s.name(),
            "average_power_mw": r.average_power_mw,
            "dram_w": e.dram,
            "display_w": e.display,
            "others_w": e.others,
            "reduction_pct": r.reference.map(|x| x.reduction_pct).unwrap_or(0.0),
            "residencies": r.residencies,
        }));
    }
    Ok(json!({ "calibration": cal.name, "rows": rows }).to_string())
}

pub fn link_bandwidth(resolution: &str, refresh_hz: u32, bits_per_pixel: u32, edp_gbps: f64) -> Result<String, String> {
    let res = Resolution::parse(resolution).map_err(|e| e.to_string())?;
    let mut d = DisplayConfig::new(res, refresh_hz);
    d.bits_per_pixel = bits_per_pixel;
    d.edp_max_bandwidth = edp_gbps * 1e9;
    let frame = d.frame_bytes().map_err(|e| e.to_string())?;
    let stream = panel_stream_rate(&d).map_err(|e| e.to_string())?;
    let burst = burst_transfer_time(res, bits_per_pixel, d.edp_max_bandwidth).map_err(|e| e.to_string())?;
    let window = 1.0 / refresh_hz as f64;
    Ok(json!({
        "frame_bytes": frame,
        "stream_gbps": stream * 1e-9,
        "burst_ms": burst * 1e3,
        "window_ms": window * 1e3,
        "link_utilization_pct": stream / d.edp_max_bandwidth * 100.0,
        "idle_after_burst_pct": (1.0 - burst / window) * 100.0,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn timeline(resolution: &str, fps: u32, scheme: &str, vr: bool, windows: u32) -> Result<String, JsValue> {
    render_timeline(resolution, fps, scheme, vr, windows).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compare_schemes(resolution: &str, fps: u32, vr: bool) -> Result<String, JsValue> {
    scheme_comparison(resolution, fps, vr).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn bandwidth(resolution: &str, refresh_hz: u32, bits_per_pixel: u32, edp_gbps: f64) -> Result<String, JsValue> {
    link_bandwidth(resolution, refresh_hz, bits_per_pixel, edp_gbps).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_has_one_lane_per_window() {
        let svg = render_timeline("FHD", 30, "burstlink", false, 4).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(">w3 "));
    }

    #[test]
    fn comparison_lists_all_schemes() {
        let v: serde_json::Value = serde_json::from_str(&scheme_comparison("4K", 60, false).unwrap()).unwrap();
        assert_eq!(v["rows"].as_array().unwrap().len(), 4);
        assert_eq!(v["rows"][0]["reduction_pct"], 0.0);
    }

    #[test]
    fn bandwidth_for_4k() {
        let v: serde_json::Value = serde_json::from_str(&link_bandwidth("4K", 60, 24, 25.92).unwrap()).unwrap();
        assert_eq!(v["frame_bytes"], 24_883_200);
        assert!((v["burst_ms"].as_f64().unwrap() - 7.68).abs() < 1e-9);
    }

    #[test]
    fn bad_scheme_is_an_error() {
        assert!(render_timeline("FHD", 30, "teleport", false, 2).is_err());
    }
}
