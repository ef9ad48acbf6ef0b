//! Closed-form window construction from chunk-cycle algebra.
//!
//! Chunk `k` of a transfer starts at `start + k·B/R` where `R` is the slower of
//! the link drain rate and the source's payload rate. The source is busy for
//! the chunk's fill time; the rest of the cycle is drain only. Any part of the
//! transfer that overlaps the C0 span is absorbed into C0.

use crate::cstates::{deepest_state, Activity, CoreState, DcState, GpuState, IpState, PackageCState, PanelState};
use crate::error::{Error, Result};
use crate::model::DramState;

use super::plan::{Source, TransferPlan, WindowPlan};
use super::{Interval, IntervalKind, WindowTimeline};

const EPS: f64 = 1e-13;

/// A piece of the window in exact seconds with uniform activity.
#[derive(Debug, Clone)]
struct Piece {
    start: f64,
    end: f64,
    state: PackageCState,
    read: f64,
    write: f64,
    edp: f64,
    drfb: f64,
    decode: f64,
    projection: f64,
}

struct Cycles {
    start: f64,
    end: f64,
    period: f64,
    n: u64,
    plan: TransferPlan,
}

impl Cycles {
    fn new(t: &TransferPlan, start: f64) -> Cycles {
        let rate = t.effective_rate();
        Cycles {
            start,
            end: start + t.payload as f64 / rate,
            period: t.chunk as f64 / rate,
            n: t.chunks(),
            plan: *t,
        }
    }

    fn chunk_size(&self, k: u64) -> f64 {
        (self.plan.chunk.min(self.plan.payload - k * self.plan.chunk)) as f64
    }

    fn cycle_start(&self, k: u64) -> f64 {
        self.start + k as f64 * self.period
    }

    fn fill_duration(&self, k: u64) -> f64 {
        let s = self.chunk_size(k);
        match self.plan.source {
            Source::Dram { rate, scale } => s * scale / rate,
            Source::Decoder { rate, .. } => s / rate,
        }
    }

    /// Producer bytes moved from DRAM by chunk `k`.
    fn fill_read(&self, k: u64) -> f64 {
        match self.plan.source {
            Source::Dram { scale, .. } => self.chunk_size(k) * scale,
            Source::Decoder { .. } => 0.0,
        }
    }

    fn cycle_of(&self, t: f64) -> u64 {
        (((t - self.start) / self.period).floor().max(0.0) as u64).min(self.n - 1)
    }

    fn breakpoints(&self, out: &mut Vec<f64>) {
        for k in 0..self.n {
            let s = self.cycle_start(k);
            out.push(s);
            out.push((s + self.fill_duration(k)).min(self.end));
        }
        out.push(self.end);
    }
}

/// Steady intervals of one window, before transitions are carved.
pub(crate) fn build_window(plan: &WindowPlan) -> Result<WindowTimeline> {
    let window = plan.window_ns as f64 * 1e-9;
    let t_orch = plan.orchestration;
    let t_dec_end = t_orch + plan.decode_span();
    let t0 = plan.c0_span();
    if t0 > window + 1e-9 {
        return Err(Error::Infeasible(format!("window {}: C0 span exceeds the window", plan.index)));
    }

    let cycles = plan.transfer.as_ref().map(|t| {
        let start = if t.after_orchestration { t_orch } else { 0.0 };
        let mut c = Cycles::new(t, start);
        if (c.end - window).abs() < 1e-9 {
            c.end = window;
        }
        c
    });
    if let Some(c) = &cycles {
        if c.end > window + 1e-9 {
            return Err(Error::Infeasible(format!(
                "window {}: transfer ends at {:.4} ms, after the window",
                plan.index,
                c.end * 1e3
            )));
        }
    }

    let mut bps = vec![0.0, t_orch.min(window), t_dec_end.min(window), t0.min(window), window];
    if let Some(c) = &cycles {
        c.breakpoints(&mut bps);
    }
    bps.retain(|x| *x >= 0.0 && *x <= window);
    bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bps.dedup_by(|a, b| (*a - *b).abs() < EPS);

    let mut pieces = Vec::with_capacity(bps.len());
    for pair in bps.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a < EPS {
            continue;
        }
        pieces.push(piece(plan, cycles.as_ref(), a, b, t_orch, t_dec_end, t0)?);
    }
    Ok(to_timeline(plan, pieces))
}

fn piece(
    plan: &WindowPlan,
    cycles: Option<&Cycles>,
    a: f64,
    b: f64,
    t_orch: f64,
    t_dec_end: f64,
    t0: f64,
) -> Result<Piece> {
    let mid = 0.5 * (a + b);
    let len = b - a;
    let in_c0 = mid < t0;
    let decoding = mid >= t_orch && mid < t_dec_end;
    let projecting = mid >= t_dec_end && mid < t0;

    let mut act = Activity::all_off();
    let mut p = Piece {
        start: a,
        end: b,
        state: PackageCState::C9,
        read: 0.0,
        write: 0.0,
        edp: 0.0,
        drfb: 0.0,
        decode: 0.0,
        projection: 0.0,
    };

    if in_c0 {
        act.cores = CoreState::Executing;
        act.dram = DramState::Active;
        p.read += plan.encoded_read * len / t0;
    }
    if decoding {
        act.vd = IpState::Active;
        let span = t_dec_end - t_orch;
        p.write += plan.decode_write * len / span;
        if plan.fbc_active {
            p.decode += len;
        }
    }
    if projecting {
        act.gpu = GpuState::Executing;
        let span = t0 - t_dec_end;
        p.read += plan.projection_read * len / span;
        p.write += plan.projection_write * len / span;
    }

    if let Some(c) = cycles {
        if mid >= c.start && mid < c.end {
            let k = c.cycle_of(mid);
            let fill_start = c.cycle_start(k);
            let fill_end = (fill_start + c.fill_duration(k)).min(c.end);
            let filling = mid >= fill_start && mid < fill_end;
            act.edp_source = true;
            act.edp_sink = true;
            act.panel = PanelState::Streaming;
            p.edp = c.plan.payload as f64 * len / (c.end - c.start);
            if c.plan.into_drfb {
                p.drfb = len;
            }
            match c.plan.source {
                Source::Dram { .. } => {
                    if filling {
                        act.dc = DcState::Fetching;
                        act.dram = DramState::Active;
                        p.read += c.fill_read(k) * len / (fill_end - fill_start);
                    } else {
                        act.dc = DcState::Draining;
                    }
                }
                Source::Decoder { projection, .. } => {
                    if filling {
                        act.dc = DcState::Receiving;
                        act.vd = IpState::Active;
                        if projection {
                            if act.gpu != GpuState::Executing {
                                act.gpu = GpuState::PipelinedProjection;
                            }
                            p.projection = len;
                        }
                    } else {
                        act.dc = DcState::Draining;
                        if act.vd == IpState::Off {
                            act.vd = IpState::ClockGated;
                        }
                    }
                }
            }
        }
    }
    if act.dram == DramState::Active {
        act.io_power_gated = false;
    }
    p.state = deepest_state(&act)?;
    Ok(p)
}

/// Rounds piece boundaries to nanoseconds, merges equal-state neighbours and
/// converts cumulative byte counts to integers so totals are preserved.
fn to_timeline(plan: &WindowPlan, pieces: Vec<Piece>) -> WindowTimeline {
    struct Acc {
        start: i64,
        end: i64,
        state: PackageCState,
        read: f64,
        write: f64,
        edp: f64,
        drfb: f64,
        decode: f64,
        projection: f64,
    }
    let mut merged: Vec<Acc> = Vec::new();
    // Bytes of sub-nanosecond pieces ride along with the next piece.
    let mut carry = [0.0f64; 6];
    for p in pieces {
        let s = crate::model::secs_to_ns(p.start);
        let e = crate::model::secs_to_ns(p.end).min(plan.window_ns);
        let vals = [p.read, p.write, p.edp, p.drfb, p.decode, p.projection];
        if e <= s {
            for j in 0..6 {
                carry[j] += vals[j];
            }
            continue;
        }
        let v: Vec<f64> = (0..6).map(|j| vals[j] + carry[j]).collect();
        carry = [0.0; 6];
        match merged.last_mut() {
            Some(last) if last.state == p.state => {
                last.end = e;
                last.read += v[0];
                last.write += v[1];
                last.edp += v[2];
                last.drfb += v[3];
                last.decode += v[4];
                last.projection += v[5];
            }
            _ => merged.push(Acc {
                start: merged.last().map(|l| l.end).unwrap_or(0),
                end: e,
                state: p.state,
                read: v[0],
                write: v[1],
                edp: v[2],
                drfb: v[3],
                decode: v[4],
                projection: v[5],
            }),
        }
    }
    if let Some(last) = merged.last_mut() {
        last.read += carry[0];
        last.write += carry[1];
        last.edp += carry[2];
        last.drfb += carry[3];
        last.decode += carry[4];
        last.projection += carry[5];
    }
    if let Some(last) = merged.last_mut() {
        last.end = plan.window_ns;
    }

    let mut cum = [0.0f64; 6];
    let mut prev = [0i64; 6];
    let mut intervals = Vec::with_capacity(merged.len());
    for m in merged {
        let vals = [m.read, m.write, m.edp, m.drfb * 1e9, m.decode * 1e9, m.projection * 1e9];
        let mut out = [0i64; 6];
        for j in 0..6 {
            cum[j] += vals[j];
            let r = cum[j].round() as i64;
            out[j] = r - prev[j];
            prev[j] = r;
        }
        intervals.push(Interval {
            kind: IntervalKind::Steady { state: m.state },
            start_ns: m.start,
            end_ns: m.end,
            dram_read: out[0].max(0) as u64,
            dram_write: out[1].max(0) as u64,
            edp_bytes: out[2].max(0) as u64,
            drfb_ns: out[3].max(0),
            decode_ns: out[4].max(0),
            projection_ns: out[5].max(0),
        });
    }
    WindowTimeline {
        window_index: plan.index,
        duration_ns: plan.window_ns,
        displayed_frame: plan.displayed,
        scheme: plan.scheme,
        intervals,
    }
}
