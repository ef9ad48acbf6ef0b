//! Fixed-tick simulation of the component state machines, used to check the
//! closed-form builder.
//!
//! Each tick advances the cores (orchestration, then decode, then projection),
//! the display controller's chunk buffer, the producer filling it and the link
//! draining it. Rates are piecewise constant, so a component that finishes
//! part-way through a tick hands the rest of the tick to the next activity
//! instead of rounding the event to a tick edge. The package state of every
//! sub-step is `deepest_state` of the activity vector.

use crate::cstates::{
    deepest_state, Activity, CalibrationSet, CoreState, DcState, GpuState, IpState, PackageCState, PanelState,
    PowerProfile,
};
use crate::error::{Error, Result};
use crate::model::{secs_to_ns, DramState, Scheme, SystemConfig, WorkloadSpec};

use super::plan::{plan_windows, Source, WindowPlan};
use super::{Interval, IntervalKind, WindowTimeline};

const SNAP: f64 = 1e-15;
const MAX_STEPS_PER_TICK: usize = 64;

/// Same as [`oracle_simulate_with`] with one profile for every window.
pub fn oracle_simulate(w: &WorkloadSpec, sys: &SystemConfig, profile: &PowerProfile, tick: f64) -> Result<Vec<WindowTimeline>> {
    let plans = plan_windows(w, sys)?;
    run(&plans, tick, |_| Ok(profile))
}

pub fn oracle_simulate_with(w: &WorkloadSpec, sys: &SystemConfig, cal: &CalibrationSet, tick: f64) -> Result<Vec<WindowTimeline>> {
    let plans = plan_windows(w, sys)?;
    run(&plans, tick, |s| cal.profile(s))
}

fn run<'a>(plans: &[WindowPlan], tick: f64, profile_for: impl Fn(Scheme) -> Result<&'a PowerProfile>) -> Result<Vec<WindowTimeline>> {
    if !(tick > 0.0 && tick <= 1e-6 + 1e-15) {
        return Err(Error::InvalidConfig(format!("oracle tick must be in (0, 1 µs], got {tick}")));
    }
    let mut windows = plans.iter().map(|p| simulate_window(p, tick)).collect::<Result<Vec<_>>>()?;
    carve(&mut windows, profile_for)?;
    Ok(windows)
}

#[derive(Debug, Clone, Copy, Default)]
struct Flow {
    read: f64,
    write: f64,
    edp: f64,
    drfb: f64,
    decode: f64,
    projection: f64,
}

impl Flow {
    fn add_scaled(&mut self, r: &Flow, dt: f64) {
        self.read += r.read * dt;
        self.write += r.write * dt;
        self.edp += r.edp * dt;
        self.drfb += r.drfb * dt;
        self.decode += r.decode * dt;
        self.projection += r.projection * dt;
    }
}

struct Run {
    end: f64,
    state: PackageCState,
    flow: Flow,
}

struct Machine<'p> {
    plan: &'p WindowPlan,
    orch_left: f64,
    dec_left: f64,
    pt_left: f64,
    enc_rate: f64,
    started: bool,
    to_request: u64,
    fill_left: f64,
    occupancy: f64,
    done: bool,
}

impl<'p> Machine<'p> {
    fn new(plan: &'p WindowPlan) -> Self {
        let busy = plan.orchestration + plan.decode_span() + plan.projection_span();
        Machine {
            plan,
            orch_left: plan.orchestration,
            dec_left: plan.decode_bytes,
            pt_left: plan.projection_bytes,
            enc_rate: if busy > 0.0 { plan.encoded_read / busy } else { 0.0 },
            started: false,
            to_request: plan.transfer.map(|t| t.payload).unwrap_or(0),
            fill_left: 0.0,
            occupancy: 0.0,
            done: plan.transfer.is_none(),
        }
    }

    fn cores_busy(&self) -> bool {
        self.orch_left > 0.0 || self.dec_left > 0.0 || self.pt_left > 0.0
    }

    fn orchestrating(&self) -> bool {
        self.orch_left > 0.0
    }

    fn decoding(&self) -> bool {
        !self.orchestrating() && self.dec_left > 0.0
    }

    fn projecting(&self) -> bool {
        !self.orchestrating() && self.dec_left <= 0.0 && self.pt_left > 0.0
    }

    /// Starts the transfer and requests chunks when the buffer has run dry.
    fn discrete_updates(&mut self) {
        let Some(t) = self.plan.transfer else { return };
        if !self.started && (!t.after_orchestration || !self.orchestrating()) {
            self.started = true;
        }
        if !self.started || self.done {
            return;
        }
        if self.fill_left <= 0.0 && self.occupancy <= 0.0 {
            if self.to_request == 0 {
                self.done = true;
            } else {
                let c = t.chunk.min(self.to_request);
                self.to_request -= c;
                self.fill_left = c as f64;
            }
        }
    }

    fn transferring(&self) -> bool {
        self.started && !self.done
    }

    fn filling(&self) -> bool {
        self.transferring() && self.fill_left > 0.0
    }

    /// Payload bytes per second into and out of the chunk buffer.
    fn buffer_rates(&self) -> (f64, f64) {
        let Some(t) = self.plan.transfer else { return (0.0, 0.0) };
        if !self.transferring() {
            return (0.0, 0.0);
        }
        let fill = if self.fill_left > 0.0 { t.source.payload_rate() } else { 0.0 };
        let drain = if self.occupancy > 0.0 { t.drain_rate } else { t.drain_rate.min(fill) };
        (fill, drain)
    }

    fn activity(&self) -> Activity {
        let mut a = Activity::all_off();
        if self.cores_busy() {
            a.cores = CoreState::Executing;
            a.dram = DramState::Active;
        }
        if self.decoding() {
            a.vd = IpState::Active;
        }
        if self.projecting() {
            a.gpu = GpuState::Executing;
        }
        if let (Some(t), true) = (self.plan.transfer, self.transferring()) {
            a.edp_source = true;
            a.edp_sink = true;
            a.panel = PanelState::Streaming;
            match t.source {
                Source::Dram { .. } => {
                    if self.filling() {
                        a.dc = DcState::Fetching;
                        a.dram = DramState::Active;
                    } else {
                        a.dc = DcState::Draining;
                    }
                }
                Source::Decoder { projection, .. } => {
                    if self.filling() {
                        a.dc = DcState::Receiving;
                        a.vd = IpState::Active;
                        if projection && a.gpu != GpuState::Executing {
                            a.gpu = GpuState::PipelinedProjection;
                        }
                    } else {
                        a.dc = DcState::Draining;
                        if a.vd == IpState::Off {
                            a.vd = IpState::ClockGated;
                        }
                    }
                }
            }
        }
        if a.dram == DramState::Active {
            a.io_power_gated = false;
        }
        a
    }

    fn flow_rates(&self) -> Flow {
        let p = self.plan;
        let mut f = Flow::default();
        if self.cores_busy() {
            f.read += self.enc_rate;
        }
        if self.decoding() {
            f.write += p.decode_write / p.decode_bytes * p.decode_rate;
            if p.fbc_active {
                f.decode = 1.0;
            }
        }
        if self.projecting() {
            f.read += p.projection_read / p.projection_bytes * p.projection_rate;
            f.write += p.projection_write / p.projection_bytes * p.projection_rate;
        }
        if let (Some(t), true) = (p.transfer, self.transferring()) {
            let (fill, drain) = self.buffer_rates();
            f.edp = drain;
            if t.into_drfb {
                f.drfb = 1.0;
            }
            match t.source {
                Source::Dram { scale, .. } => f.read += fill * scale,
                Source::Decoder { projection, .. } => {
                    if projection && fill > 0.0 {
                        f.projection = 1.0;
                    }
                }
            }
        }
        f
    }

    /// Time until the next component event.
    fn next_event(&self) -> f64 {
        let p = self.plan;
        let mut dt = f64::INFINITY;
        if self.orchestrating() {
            dt = dt.min(self.orch_left);
        } else if self.decoding() {
            dt = dt.min(self.dec_left / p.decode_rate);
        } else if self.projecting() {
            dt = dt.min(self.pt_left / p.projection_rate);
        }
        let (fill, drain) = self.buffer_rates();
        if fill > 0.0 {
            dt = dt.min(self.fill_left / fill);
        }
        if self.occupancy > 0.0 && drain > fill {
            dt = dt.min(self.occupancy / (drain - fill));
        }
        dt
    }

    fn advance(&mut self, dt: f64) {
        let p = self.plan;
        let (fill, drain) = self.buffer_rates();
        if self.orchestrating() {
            self.orch_left -= dt;
            if self.orch_left < SNAP {
                self.orch_left = 0.0;
            }
        } else if self.decoding() {
            self.dec_left -= dt * p.decode_rate;
            if self.dec_left < SNAP * p.decode_rate {
                self.dec_left = 0.0;
            }
        } else if self.projecting() {
            self.pt_left -= dt * p.projection_rate;
            if self.pt_left < SNAP * p.projection_rate {
                self.pt_left = 0.0;
            }
        }
        if self.transferring() {
            self.fill_left -= fill * dt;
            self.occupancy += (fill - drain) * dt;
            let tol = 1e-6;
            if self.fill_left < tol {
                self.fill_left = 0.0;
            }
            if self.occupancy < tol {
                self.occupancy = 0.0;
            }
        }
    }
}

fn simulate_window(plan: &WindowPlan, tick: f64) -> Result<WindowTimeline> {
    let window = plan.window_ns as f64 * 1e-9;
    let ticks = (window / tick).ceil() as u64;
    let mut m = Machine::new(plan);
    let mut runs: Vec<Run> = Vec::new();
    let mut t = 0.0;

    for i in 0..ticks {
        let tick_end = ((i + 1) as f64 * tick).min(window);
        let mut steps = 0;
        while t < tick_end {
            m.discrete_updates();
            let state = deepest_state(&m.activity())?;
            let rates = m.flow_rates();
            let dt = m.next_event().min(tick_end - t).max(0.0);
            let step_end = if tick_end - (t + dt) < SNAP { tick_end } else { t + dt };
            let dt = step_end - t;
            if dt <= 0.0 {
                m.advance(0.0);
                steps += 1;
                if steps > MAX_STEPS_PER_TICK {
                    return Err(Error::Consistency(format!("oracle stalled in window {} at {t:.9} s", plan.index)));
                }
                continue;
            }
            match runs.last_mut() {
                Some(r) if r.state == state => {
                    r.end = step_end;
                    r.flow.add_scaled(&rates, dt);
                }
                _ => {
                    let mut flow = Flow::default();
                    flow.add_scaled(&rates, dt);
                    runs.push(Run { end: step_end, state, flow });
                }
            }
            m.advance(dt);
            t = step_end;
            steps += 1;
            if steps > MAX_STEPS_PER_TICK {
                return Err(Error::Consistency(format!("oracle stalled in window {} at {t:.9} s", plan.index)));
            }
        }
    }
    m.discrete_updates();
    if !m.done || m.cores_busy() {
        return Err(Error::Infeasible(format!("window {}: work left over at the end of the window", plan.index)));
    }
    Ok(emit(plan, runs))
}

fn emit(plan: &WindowPlan, runs: Vec<Run>) -> WindowTimeline {
    let mut intervals: Vec<Interval> = Vec::new();
    let mut cum = [0.0f64; 6];
    let mut prev = [0i64; 6];
    let mut pending = [0.0f64; 6];
    let n = runs.len();
    for (idx, r) in runs.into_iter().enumerate() {
        let start = intervals.last().map(|l| l.end_ns).unwrap_or(0);
        let end = if idx + 1 == n { plan.window_ns } else { secs_to_ns(r.end) };
        let f = r.flow;
        let vals = [f.read, f.write, f.edp, f.drfb * 1e9, f.decode * 1e9, f.projection * 1e9];
        if end <= start {
            for j in 0..6 {
                pending[j] += vals[j];
            }
            continue;
        }
        let mut out = [0i64; 6];
        for j in 0..6 {
            cum[j] += vals[j] + pending[j];
            let v = cum[j].round() as i64;
            out[j] = v - prev[j];
            prev[j] = v;
        }
        pending = [0.0; 6];
        match intervals.last_mut() {
            Some(last) if last.kind == (IntervalKind::Steady { state: r.state }) => {
                last.end_ns = end;
                last.dram_read += out[0] as u64;
                last.dram_write += out[1] as u64;
                last.edp_bytes += out[2] as u64;
                last.drfb_ns += out[3];
                last.decode_ns += out[4];
                last.projection_ns += out[5];
            }
            _ => intervals.push(Interval {
                kind: IntervalKind::Steady { state: r.state },
                start_ns: start,
                end_ns: end,
                dram_read: out[0].max(0) as u64,
                dram_write: out[1].max(0) as u64,
                edp_bytes: out[2].max(0) as u64,
                drfb_ns: out[3].max(0),
                decode_ns: out[4].max(0),
                projection_ns: out[5].max(0),
            }),
        }
    }
    if let Some(last) = intervals.last_mut() {
        last.end_ns = plan.window_ns;
    }
    WindowTimeline {
        window_index: plan.index,
        duration_ns: plan.window_ns,
        displayed_frame: plan.displayed,
        scheme: plan.scheme,
        intervals,
    }
}

/// State-change intervals taken from the head of every new steady run,
/// wrapping from the final window into the first.
fn carve<'a>(windows: &mut [WindowTimeline], profile_for: impl Fn(Scheme) -> Result<&'a PowerProfile>) -> Result<()> {
    let mut last = match windows.last().and_then(|w| w.intervals.last()) {
        Some(iv) => iv.kind,
        None => return Ok(()),
    };
    for w in windows.iter_mut() {
        let profile = profile_for(w.scheme)?;
        let mut rebuilt = Vec::new();
        for iv in std::mem::take(&mut w.intervals) {
            let (IntervalKind::Steady { state: from }, IntervalKind::Steady { state: to }) = (last, iv.kind) else {
                unreachable!("oracle runs are steady before carving")
            };
            last = iv.kind;
            let len = iv.duration_ns();
            let cut = if from == to { 0 } else { secs_to_ns(profile.transition(from, to).latency()).min(len) };
            if cut == 0 {
                rebuilt.push(iv);
                continue;
            }
            let share = |x: f64| (x * cut as f64 / len as f64).round();
            let head = Interval {
                kind: IntervalKind::Transition { from, to },
                start_ns: iv.start_ns,
                end_ns: iv.start_ns + cut,
                dram_read: share(iv.dram_read as f64) as u64,
                dram_write: share(iv.dram_write as f64) as u64,
                edp_bytes: share(iv.edp_bytes as f64) as u64,
                drfb_ns: share(iv.drfb_ns as f64) as i64,
                decode_ns: share(iv.decode_ns as f64) as i64,
                projection_ns: share(iv.projection_ns as f64) as i64,
            };
            let rest = Interval {
                kind: iv.kind,
                start_ns: head.end_ns,
                end_ns: iv.end_ns,
                dram_read: iv.dram_read - head.dram_read,
                dram_write: iv.dram_write - head.dram_write,
                edp_bytes: iv.edp_bytes - head.edp_bytes,
                drfb_ns: iv.drfb_ns - head.drfb_ns,
                decode_ns: iv.decode_ns - head.decode_ns,
                projection_ns: iv.projection_ns - head.projection_ns,
            };
            if rest.end_ns > rest.start_ns {
                rebuilt.push(head);
                rebuilt.push(rest);
            } else {
                rebuilt.push(Interval { kind: head.kind, ..iv });
            }
        }
        w.intervals = rebuilt;
    }
    Ok(())
}
