//! Per-window work plans: what each window has to do, independent of how the
//! timeline is derived from it. Both the closed-form builder and the tick
//! oracle consume these.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{frame_bytes, Scheme, SystemConfig, VideoKind, WorkloadSpec};
use crate::scenarios::{select_scheme, selective_update_bytes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplayedFrame {
    New,
    /// The panel shows the previous frame again.
    Repeated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    /// Display controller pulls chunks from DRAM. `scale` is DRAM bytes per
    /// payload byte (compression, caching).
    Dram { rate: f64, scale: f64 },
    /// Decoder writes chunks straight into the display controller buffer.
    Decoder { rate: f64, projection: bool },
}

impl Source {
    /// Payload bytes per second the source can supply.
    pub fn payload_rate(&self) -> f64 {
        match *self {
            Source::Dram { rate, scale } => rate / scale,
            Source::Decoder { rate, .. } => rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferPlan {
    pub payload: u64,
    pub chunk: u64,
    /// Link drain rate in bytes per second.
    pub drain_rate: f64,
    pub source: Source,
    /// Transfer waits for the window's orchestration to finish.
    pub after_orchestration: bool,
    /// Data lands in the panel's double frame buffer.
    pub into_drfb: bool,
}

impl TransferPlan {
    pub fn effective_rate(&self) -> f64 {
        self.drain_rate.min(self.source.payload_rate())
    }

    pub fn chunks(&self) -> u64 {
        self.payload.div_ceil(self.chunk)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    pub index: usize,
    pub scheme: Scheme,
    pub displayed: DisplayedFrame,
    pub window_ns: i64,
    /// Seconds of driver work at the start of the window.
    pub orchestration: f64,
    /// Decode on the conventional path, after orchestration, in C0.
    pub decode_bytes: f64,
    pub decode_rate: f64,
    /// GPU projection after decode, in C0.
    pub projection_bytes: f64,
    pub projection_rate: f64,
    /// DRAM reads of the encoded stream, spread over the C0 span.
    pub encoded_read: f64,
    pub decode_write: f64,
    pub projection_read: f64,
    pub projection_write: f64,
    /// Compression hardware runs during the decode span.
    pub fbc_active: bool,
    pub transfer: Option<TransferPlan>,
}

impl WindowPlan {
    pub fn c0_span(&self) -> f64 {
        self.orchestration + self.decode_span() + self.projection_span()
    }

    pub fn decode_span(&self) -> f64 {
        if self.decode_bytes > 0.0 {
            self.decode_bytes / self.decode_rate
        } else {
            0.0
        }
    }

    pub fn projection_span(&self) -> f64 {
        if self.projection_bytes > 0.0 {
            self.projection_bytes / self.projection_rate
        } else {
            0.0
        }
    }

    fn idle(index: usize, scheme: Scheme, displayed: DisplayedFrame, window_ns: i64) -> Self {
        WindowPlan {
            index,
            scheme,
            displayed,
            window_ns,
            orchestration: 0.0,
            decode_bytes: 0.0,
            decode_rate: 1.0,
            projection_bytes: 0.0,
            projection_rate: 1.0,
            encoded_read: 0.0,
            decode_write: 0.0,
            projection_read: 0.0,
            projection_write: 0.0,
            fbc_active: false,
            transfer: None,
        }
    }
}

/// Scheme actually used for a window after the destination selector and the
/// windowed-video staging.
pub fn effective_scheme(w: &WorkloadSpec, window: usize) -> Scheme {
    let mut s = select_scheme(&w.overlay.plane_flags, w.scheme, &w.display);
    if s == Scheme::BurstingOnly && !w.display.drfb_present {
        s = Scheme::Baseline;
    }
    if w.overlay.windowed && window < w.overlay.stage1_windows as usize {
        s = Scheme::Baseline;
    }
    s
}

struct FrameCtx {
    frame: u64,
    encoded: f64,
    window_ns: i64,
    panel_rate: f64,
    edp_rate: f64,
}

pub fn plan_windows(w: &WorkloadSpec, sys: &SystemConfig) -> Result<Vec<WindowPlan>> {
    let n = w.windows();
    let work = vec![1.0; n];
    plan_with_work(w, sys, &work, None)
}

/// Plans where window `i` produces `work[i]` of a frame and, for burst
/// transfers, sends `payload[i]` bytes.
pub(crate) fn plan_with_work(
    w: &WorkloadSpec,
    sys: &SystemConfig,
    work: &[f64],
    payload: Option<&[u64]>,
) -> Result<Vec<WindowPlan>> {
    let d = &w.display;
    let frame = frame_bytes(d.resolution, d.bits_per_pixel)?;
    let window_ns = crate::model::window_ns(d.refresh_hz)?;
    let ctx = FrameCtx {
        frame,
        encoded: frame as f64 / w.stream_compression_ratio,
        window_ns,
        panel_rate: d.panel_byte_rate()?,
        edp_rate: d.edp_byte_rate(),
    };
    let repeat = w.repeat_ratio() as usize;
    let batch = w.overlay.batch_frames.max(1) as usize;
    let vr = w.kind == VideoKind::Vr360;
    let ov = &w.overlay;

    let mut out = Vec::with_capacity(work.len());
    for (i, &fw) in work.iter().enumerate() {
        let scheme = effective_scheme(w, i);
        let new = i % repeat == 0;
        let displayed = if new { DisplayedFrame::New } else { DisplayedFrame::Repeated };
        let frame_index = i / repeat;
        let mut p = WindowPlan::idle(i, scheme, displayed, window_ns);
        let f = ctx.frame as f64;
        let windowed_payload = if ov.windowed && scheme != Scheme::Baseline {
            selective_update_bytes(d, ov.dirty_fraction, ov.selective_header_bytes)?
        } else {
            ctx.frame
        };
        let burst_payload = payload.map(|p| p[i]).unwrap_or(windowed_payload);

        match scheme {
            Scheme::Baseline | Scheme::BurstingOnly => {
                let batching = batch > 1;
                let mut scale = 1.0;
                if ov.fbc_ratio < 1.0 {
                    scale *= ov.fbc_ratio;
                }
                if batching {
                    scale *= 1.0 - ov.batch_cached_fraction;
                }
                let decodes_here = new && frame_index % batch == 0;
                if decodes_here {
                    let frames = batch as f64 * fw;
                    p.orchestration = sys.orchestration_time * frames;
                    p.decode_bytes = f * frames;
                    p.decode_rate = sys.decode_rate * if batching { ov.batch_decode_boost } else { 1.0 };
                    p.encoded_read = ctx.encoded * frames;
                    p.decode_write = f * frames * scale;
                    p.fbc_active = ov.fbc_ratio < 1.0;
                    if vr {
                        p.projection_bytes = f * frames;
                        p.projection_rate = sys.gpu_pt_rate;
                        p.projection_read = f * frames * scale;
                        p.projection_write = f * frames * scale;
                    }
                }
                let source = Source::Dram { rate: sys.dram_fetch_bandwidth, scale };
                if scheme == Scheme::Baseline {
                    if new || !w.psr_alternate_windows {
                        p.transfer = Some(TransferPlan {
                            payload: ctx.frame,
                            chunk: sys.dc_buffer_bytes,
                            drain_rate: ctx.panel_rate,
                            source,
                            after_orchestration: false,
                            into_drfb: false,
                        });
                    }
                } else if new {
                    p.transfer = Some(TransferPlan {
                        payload: burst_payload,
                        chunk: sys.dc_buffer_bytes,
                        drain_rate: ctx.edp_rate,
                        source,
                        after_orchestration: false,
                        into_drfb: true,
                    });
                }
            }
            Scheme::BypassOnly | Scheme::Burstlink => {
                if new {
                    p.orchestration = sys.offload_orchestration_time * fw;
                    p.encoded_read = ctx.encoded * fw;
                    let mut rate = sys.offload_decode_rate();
                    if vr {
                        rate = rate.min(sys.gpu_pt_rate);
                    }
                    let burst = scheme == Scheme::Burstlink;
                    p.transfer = Some(TransferPlan {
                        payload: burst_payload,
                        chunk: sys.dc_buffer_bytes,
                        drain_rate: if burst { ctx.edp_rate } else { ctx.panel_rate },
                        source: Source::Decoder { rate, projection: vr },
                        after_orchestration: burst,
                        into_drfb: true,
                    });
                } else {
                    p.orchestration = sys.repeat_orchestration_time;
                }
            }
        }
        if let Some(t) = &p.transfer {
            if t.payload == 0 {
                p.transfer = None;
            }
        }
        check_fits(&p, &ctx)?;
        out.push(p);
    }
    Ok(out)
}

fn check_fits(p: &WindowPlan, ctx: &FrameCtx) -> Result<()> {
    let window = ctx.window_ns as f64 * 1e-9;
    let slack = 1e-9;
    if p.c0_span() > window + slack {
        return Err(Error::Infeasible(format!(
            "window {}: C0 work {:.3} ms exceeds the {:.3} ms window",
            p.index,
            p.c0_span() * 1e3,
            window * 1e3
        )));
    }
    if let Some(t) = &p.transfer {
        let start = if t.after_orchestration { p.orchestration } else { 0.0 };
        let end = start + t.payload as f64 / t.effective_rate();
        if end > window + slack {
            return Err(Error::Infeasible(format!(
                "window {}: transfer ends at {:.3} ms, after the {:.3} ms window",
                p.index,
                end * 1e3,
                window * 1e3
            )));
        }
    }
    Ok(())
}
