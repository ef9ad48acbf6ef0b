//! Domain configuration and the frame/rate arithmetic shared by every other module.
//!
//! Durations inside timelines are integer nanoseconds. Rates are bytes per second
//! unless the name says bits.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::scenarios::ScenarioOverlay;

pub const NS_PER_S: f64 = 1e9;

/// Seconds to the nearest nanosecond.
pub fn secs_to_ns(s: f64) -> i64 {
    (s * NS_PER_S).round() as i64
}

pub fn ns_to_secs(ns: i64) -> f64 {
    ns as f64 / NS_PER_S
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Resolution {
    pub const FHD: Resolution = Resolution { width: 1920, height: 1080 };
    pub const QHD: Resolution = Resolution { width: 2560, height: 1440 };
    pub const UHD_4K: Resolution = Resolution { width: 3840, height: 2160 };
    pub const UHD_5K: Resolution = Resolution { width: 5120, height: 2880 };

    pub const PRESETS: [(&'static str, Resolution); 4] = [
        ("FHD", Resolution::FHD),
        ("QHD", Resolution::QHD),
        ("4K", Resolution::UHD_4K),
        ("5K", Resolution::UHD_5K),
    ];

    pub fn new(width: u32, height: u32) -> Self {
        Resolution { width, height }
    }

    /// Accepts a preset name (`FHD`, `QHD`, `4K`, `5K`, case-insensitive) or `WxH`.
    pub fn parse(s: &str) -> Result<Resolution> {
        let t = s.trim();
        for (name, r) in Resolution::PRESETS {
            if t.eq_ignore_ascii_case(name) {
                return Ok(r);
            }
        }
        let (w, h) = t
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::InvalidConfig(format!("unknown resolution '{s}'")))?;
        let w = w.trim().parse::<u32>().map_err(|_| Error::InvalidConfig(format!("bad width in '{s}'")))?;
        let h = h.trim().parse::<u32>().map_err(|_| Error::InvalidConfig(format!("bad height in '{s}'")))?;
        Ok(Resolution { width: w, height: h })
    }

    pub fn pixels(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    /// Preset name when the size matches one, else `WxH`.
    pub fn label(&self) -> String {
        Resolution::PRESETS
            .iter()
            .find(|(_, r)| r == self)
            .map(|(n, _)| n.to_string())
            .unwrap_or_else(|| format!("{}x{}", self.width, self.height))
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for Resolution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            Dims {
                width: u32,
                height: u32,
            },
        }
        match Repr::deserialize(d)? {
            Repr::Name(s) => Resolution::parse(&s).map_err(serde::de::Error::custom),
            Repr::Dims { width, height } => Ok(Resolution { width, height }),
        }
    }
}

fn default_bpp() -> u32 {
    24
}
fn default_edp() -> f64 {
    25.92e9
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplayConfig {
    pub resolution: Resolution,
    pub refresh_hz: u32,
    #[serde(default = "default_bpp")]
    pub bits_per_pixel: u32,
    /// Peak link rate in bits per second.
    #[serde(default = "default_edp")]
    pub edp_max_bandwidth: f64,
    #[serde(default = "yes")]
    pub panel_psr_capable: bool,
    #[serde(default = "yes")]
    pub panel_psr2_capable: bool,
    #[serde(default = "yes")]
    pub drfb_present: bool,
}

impl DisplayConfig {
    pub fn new(resolution: Resolution, refresh_hz: u32) -> Self {
        DisplayConfig {
            resolution,
            refresh_hz,
            bits_per_pixel: default_bpp(),
            edp_max_bandwidth: default_edp(),
            panel_psr_capable: true,
            panel_psr2_capable: true,
            drfb_present: true,
        }
    }

    pub fn frame_bytes(&self) -> Result<u64> {
        frame_bytes(self.resolution, self.bits_per_pixel)
    }

    /// Panel consumption rate in bytes per second.
    pub fn panel_byte_rate(&self) -> Result<f64> {
        Ok(panel_stream_rate(self)? / 8.0)
    }

    pub fn edp_byte_rate(&self) -> f64 {
        self.edp_max_bandwidth / 8.0
    }
}

/// DRAM background power per DRAM power state, in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DramBackground {
    pub active: f64,
    pub fast_powerdown: f64,
    pub self_refresh: f64,
}

impl DramBackground {
    pub fn watts(&self, state: DramState) -> f64 {
        match state {
            DramState::Active => self.active,
            DramState::FastPowerdown => self.fast_powerdown,
            DramState::SelfRefresh => self.self_refresh,
            DramState::Off => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DramState {
    Active,
    FastPowerdown,
    SelfRefresh,
    Off,
}

impl DramState {
    pub const ALL: [DramState; 4] =
        [DramState::Active, DramState::FastPowerdown, DramState::SelfRefresh, DramState::Off];
}

fn default_chunk() -> u64 {
    524_288
}
fn default_capacity() -> u64 {
    8 << 30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default = "default_chunk")]
    pub dc_buffer_bytes: u64,
    pub dram_fetch_bandwidth: f64,
    /// Decoded output bytes per second while the cores orchestrate in C0.
    pub decode_rate: f64,
    /// Decoder rate when it feeds the display controller directly with the
    /// package in C7. Falls back to `decode_rate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lowpower_decode_rate: Option<f64>,
    pub gpu_pt_rate: f64,
    /// Driver time in C0 per decoded frame on the conventional path.
    pub orchestration_time: f64,
    /// C0 time per new frame when the power unit drives decode and transfer.
    pub offload_orchestration_time: f64,
    /// C0 time at the start of a repeated window on the offloaded path.
    pub repeat_orchestration_time: f64,
    pub dram_coeff_read: f64,
    pub dram_coeff_write: f64,
    pub dram_background_power: DramBackground,
    #[serde(default = "default_capacity")]
    pub dram_capacity_bytes: u64,
}

impl SystemConfig {
    pub fn offload_decode_rate(&self) -> f64 {
        self.lowpower_decode_rate.unwrap_or(self.decode_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VideoKind {
    Planar,
    Vr360,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Baseline,
    BypassOnly,
    BurstingOnly,
    Burstlink,
}

impl Scheme {
    pub const ALL: [Scheme; 4] =
        [Scheme::Baseline, Scheme::BypassOnly, Scheme::BurstingOnly, Scheme::Burstlink];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Baseline => "baseline",
            Scheme::BypassOnly => "bypass_only",
            Scheme::BurstingOnly => "bursting_only",
            Scheme::Burstlink => "burstlink",
        }
    }

    pub fn parse(s: &str) -> Result<Scheme> {
        let t = s.trim().to_ascii_lowercase().replace('-', "_");
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == t || (t == "bypass" && *x == Scheme::BypassOnly) || (t == "bursting" && *x == Scheme::BurstingOnly))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme '{s}'")))
    }

    /// Decoded frames pass through host DRAM.
    pub fn uses_dram_frame_buffer(&self) -> bool {
        matches!(self, Scheme::Baseline | Scheme::BurstingOnly)
    }

    /// Transfers at the link's peak rate into the panel's double buffer.
    pub fn bursts(&self) -> bool {
        matches!(self, Scheme::BurstingOnly | Scheme::Burstlink)
    }

    pub fn needs_drfb(&self) -> bool {
        !matches!(self, Scheme::Baseline)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    #[serde(default = "default_kind")]
    pub kind: VideoKind,
    pub video_fps: u32,
    pub display: DisplayConfig,
    pub scheme: Scheme,
    #[serde(default)]
    pub overlay: ScenarioOverlay,
    /// Defaults to one second of windows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows_to_simulate: Option<usize>,
    /// Baseline repeat windows drop into panel self-refresh instead of
    /// streaming the frame a second time.
    #[serde(default)]
    pub psr_alternate_windows: bool,
    /// Decoded bytes per encoded byte of the video stream.
    #[serde(default = "default_stream_ratio")]
    pub stream_compression_ratio: f64,
}

fn default_stream_ratio() -> f64 {
    50.0
}

fn default_kind() -> VideoKind {
    VideoKind::Planar
}

impl WorkloadSpec {
    pub fn new(resolution: Resolution, refresh_hz: u32, video_fps: u32, scheme: Scheme) -> Self {
        WorkloadSpec {
            kind: VideoKind::Planar,
            video_fps,
            display: DisplayConfig::new(resolution, refresh_hz),
            scheme,
            overlay: ScenarioOverlay::default(),
            windows_to_simulate: None,
            psr_alternate_windows: false,
            stream_compression_ratio: default_stream_ratio(),
        }
    }

    pub fn with_scheme(&self, scheme: Scheme) -> Self {
        WorkloadSpec { scheme, ..self.clone() }
    }

    pub fn windows(&self) -> usize {
        self.windows_to_simulate.unwrap_or(self.display.refresh_hz as usize)
    }

    /// Windows per decoded frame.
    pub fn repeat_ratio(&self) -> u32 {
        if self.video_fps == 0 {
            1
        } else {
            (self.display.refresh_hz / self.video_fps).max(1)
        }
    }
}

/// `width × height × bpp / 8` in exact integer arithmetic.
pub fn frame_bytes(resolution: Resolution, bits_per_pixel: u32) -> Result<u64> {
    if resolution.width == 0 || resolution.height == 0 {
        return Err(Error::InvalidConfig(format!("resolution {}x{} has a zero dimension", resolution.width, resolution.height)));
    }
    if !matches!(bits_per_pixel, 16 | 24 | 30 | 32) {
        return Err(Error::InvalidConfig(format!("unsupported bits_per_pixel {bits_per_pixel}")));
    }
    let bits = resolution.pixels() * bits_per_pixel as u64;
    if bits % 8 != 0 {
        return Err(Error::InvalidConfig(format!("{bits} frame bits is not a whole number of bytes")));
    }
    Ok(bits / 8)
}

/// Window length in seconds.
pub fn frame_window(refresh_hz: u32) -> Result<f64> {
    if refresh_hz == 0 {
        return Err(Error::InvalidConfig("refresh_hz must be positive".into()));
    }
    Ok(1.0 / refresh_hz as f64)
}

pub fn window_ns(refresh_hz: u32) -> Result<i64> {
    Ok(secs_to_ns(frame_window(refresh_hz)?))
}

/// Link rate needed to refresh the panel from the host every window, in bits/s.
pub fn panel_stream_rate(display: &DisplayConfig) -> Result<f64> {
    frame_window(display.refresh_hz)?;
    let bits = frame_bytes(display.resolution, display.bits_per_pixel)? * 8 * display.refresh_hz as u64;
    Ok(bits as f64)
}

/// Time to move one frame at the link's peak rate, in seconds.
pub fn burst_transfer_time(resolution: Resolution, bits_per_pixel: u32, edp_max_bandwidth: f64) -> Result<f64> {
    if !(edp_max_bandwidth > 0.0) {
        return Err(Error::InvalidConfig("edp_max_bandwidth must be positive".into()));
    }
    Ok(frame_bytes(resolution, bits_per_pixel)? as f64 * 8.0 / edp_max_bandwidth)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
}

impl Violation {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Violation { code: code.to_string(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

/// Checks every invariant and returns all violations, never aborting early.
pub fn validate_config(w: &WorkloadSpec, s: &SystemConfig) -> Vec<Violation> {
    let mut v = Vec::new();
    let d = &w.display;
    let res = d.resolution;

    if res.width == 0 || res.height == 0 {
        v.push(Violation::new("resolution.zero_dimension", format!("{}x{}", res.width, res.height)));
    }
    if !matches!(d.bits_per_pixel, 16 | 24 | 30 | 32) {
        v.push(Violation::new("display.bpp_unsupported", format!("{} bits per pixel", d.bits_per_pixel)));
    }
    if d.refresh_hz == 0 {
        v.push(Violation::new("display.refresh_zero", "refresh_hz must be positive"));
    }
    if !(d.edp_max_bandwidth > 0.0 && d.edp_max_bandwidth.is_finite()) {
        v.push(Violation::new("display.edp_bandwidth_nonpositive", format!("{}", d.edp_max_bandwidth)));
    }
    if d.drfb_present && !d.panel_psr_capable {
        v.push(Violation::new("display.drfb_requires_psr", "a double frame buffer needs a PSR-capable panel"));
    }

    if w.video_fps == 0 {
        v.push(Violation::new("workload.fps_zero", "video_fps must be positive"));
    } else if d.refresh_hz > 0 {
        if w.video_fps > d.refresh_hz {
            v.push(Violation::new("workload.fps_exceeds_refresh", format!("{} FPS on a {} Hz panel", w.video_fps, d.refresh_hz)));
        } else if d.refresh_hz % w.video_fps != 0 {
            v.push(Violation::new(
                "workload.repeat_ratio_not_integral",
                format!("repeat ratio not integral: {} Hz / {} FPS", d.refresh_hz, w.video_fps),
            ));
        }
    }
    if !(w.stream_compression_ratio >= 1.0 && w.stream_compression_ratio.is_finite()) {
        v.push(Violation::new("workload.stream_ratio_invalid", format!("{}", w.stream_compression_ratio)));
    }
    if w.windows_to_simulate == Some(0) {
        v.push(Violation::new("workload.windows_zero", "windows_to_simulate must be at least 1"));
    }

    if s.dc_buffer_bytes == 0 {
        v.push(Violation::new("system.dc_buffer_zero", "dc_buffer_bytes must be positive"));
    }
    for (name, x) in [
        ("dram_fetch_bandwidth", s.dram_fetch_bandwidth),
        ("decode_rate", s.decode_rate),
        ("gpu_pt_rate", s.gpu_pt_rate),
        ("lowpower_decode_rate", s.lowpower_decode_rate.unwrap_or(1.0)),
    ] {
        if !(x > 0.0 && x.is_finite()) {
            v.push(Violation::new("system.rate_nonpositive", format!("{name} = {x}")));
        }
    }
    for (name, x) in [
        ("orchestration_time", s.orchestration_time),
        ("offload_orchestration_time", s.offload_orchestration_time),
        ("repeat_orchestration_time", s.repeat_orchestration_time),
        ("dram_coeff_read", s.dram_coeff_read),
        ("dram_coeff_write", s.dram_coeff_write),
        ("dram_background_power.active", s.dram_background_power.active),
        ("dram_background_power.fast_powerdown", s.dram_background_power.fast_powerdown),
        ("dram_background_power.self_refresh", s.dram_background_power.self_refresh),
    ] {
        if !(x >= 0.0 && x.is_finite()) {
            v.push(Violation::new("system.value_negative", format!("{name} = {x}")));
        }
    }
    if let Ok(fhd) = frame_bytes(Resolution::FHD, d.bits_per_pixel.clamp(16, 32)) {
        let limit = frame_bytes(res, d.bits_per_pixel).map(|f| f.min(fhd)).unwrap_or(fhd);
        if s.dc_buffer_bytes > limit {
            v.push(Violation::new("system.dc_buffer_exceeds_frame", format!("{} > {} bytes", s.dc_buffer_bytes, limit)));
        }
    }

    crate::scenarios::validate_overlay(w, s, &mut v);

    if !v.is_empty() {
        return v;
    }

    // Timing checks need a structurally valid config.
    let frame = frame_bytes(res, d.bits_per_pixel).unwrap_or(0) as f64;
    let window = 1.0 / d.refresh_hz as f64;
    let panel_rate = frame * d.refresh_hz as f64;
    let edp_rate = d.edp_byte_rate();
    if panel_rate * 8.0 > d.edp_max_bandwidth {
        v.push(Violation::new(
            "stream.exceeds_edp_bandwidth",
            format!("panel needs {:.3} Gbps, link peaks at {:.3} Gbps", panel_rate * 8e-9, d.edp_max_bandwidth * 1e-9),
        ));
    }
    if w.scheme == Scheme::BurstingOnly && !d.drfb_present {
        v.push(Violation::new("scheme.requires_drfb", "bursting_only needs a double frame buffer in the panel"));
    }
    if w.scheme.bursts() {
        if let Ok(t) = burst_transfer_time(res, d.bits_per_pixel, d.edp_max_bandwidth) {
            if t >= window {
                v.push(Violation::new("burst.exceeds_window", format!("burst {:.3} ms >= window {:.3} ms", t * 1e3, window * 1e3)));
            }
        }
    }

    let vr = w.kind == VideoKind::Vr360;
    let batch = w.overlay.batch_frames.max(1) as f64;
    let boost = if w.overlay.batch_frames > 1 { w.overlay.batch_decode_boost } else { 1.0 };
    let projection = if vr { frame / s.gpu_pt_rate } else { 0.0 };
    let conventional_c0 = batch * (s.orchestration_time + frame / (s.decode_rate * boost) + projection);
    let offloaded = w.scheme == Scheme::BypassOnly || w.scheme == Scheme::Burstlink;
    let selected_offload = offloaded && crate::scenarios::select_scheme(&w.overlay.plane_flags, w.scheme, d) != Scheme::Baseline;
    if !selected_offload || w.overlay.windowed {
        if conventional_c0 >= window {
            v.push(Violation::new(
                "decode.exceeds_window",
                format!("C0 span {:.3} ms >= window {:.3} ms", conventional_c0 * 1e3, window * 1e3),
            ));
        }
        if s.dram_fetch_bandwidth < panel_rate {
            v.push(Violation::new("fetch.below_stream_rate", "DRAM fetch bandwidth below the panel byte rate"));
        }
    }
    if selected_offload {
        let mut producer = s.offload_decode_rate();
        if vr {
            producer = producer.min(s.gpu_pt_rate);
        }
        if w.scheme == Scheme::Burstlink {
            let span = s.offload_orchestration_time + frame / producer.min(edp_rate);
            if span > window {
                v.push(Violation::new(
                    "burst.exceeds_window",
                    format!("orchestration + burst {:.3} ms > window {:.3} ms", span * 1e3, window * 1e3),
                ));
            }
        } else if producer < panel_rate {
            v.push(Violation::new("decode.below_stream_rate", "decoder cannot keep up with the panel"));
        }
        if s.offload_orchestration_time >= window || s.repeat_orchestration_time >= window {
            v.push(Violation::new("decode.exceeds_window", "orchestration does not fit in the window"));
        }
    }
    v
}
