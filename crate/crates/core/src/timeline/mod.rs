//! Per-window interval timelines for each scheme, plus a tick-stepped oracle.

mod analytic;
pub mod export;
pub mod oracle;
pub mod plan;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cstates::{CalibrationSet, PackageCState, PowerProfile};
use crate::error::{Error, Result};
use crate::model::{secs_to_ns, validate_config, Scheme, SystemConfig, WorkloadSpec};

pub use plan::{effective_scheme, plan_windows, DisplayedFrame, Source, TransferPlan, WindowPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntervalKind {
    Steady { state: PackageCState },
    Transition { from: PackageCState, to: PackageCState },
}

impl IntervalKind {
    pub fn steady_state(&self) -> Option<PackageCState> {
        match self {
            IntervalKind::Steady { state } => Some(*state),
            IntervalKind::Transition { .. } => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            IntervalKind::Steady { state } => state.to_string(),
            IntervalKind::Transition { from, to } => format!("{from}->{to}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(flatten)]
    pub kind: IntervalKind,
    pub start_ns: i64,
    pub end_ns: i64,
    pub dram_read: u64,
    pub dram_write: u64,
    pub edp_bytes: u64,
    /// Time within the interval that the link writes into the panel's double buffer.
    pub drfb_ns: i64,
    /// Time with compression hardware running beside the decoder.
    pub decode_ns: i64,
    /// Time with the GPU projecting chunks inside C7.
    pub projection_ns: i64,
}

impl Interval {
    pub fn duration_ns(&self) -> i64 {
        self.end_ns - self.start_ns
    }

    pub fn drfb_active(&self) -> bool {
        self.drfb_ns > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTimeline {
    pub window_index: usize,
    pub duration_ns: i64,
    pub displayed_frame: DisplayedFrame,
    /// Scheme in effect for this window.
    pub scheme: Scheme,
    pub intervals: Vec<Interval>,
}

impl WindowTimeline {
    pub fn edp_bytes(&self) -> u64 {
        self.intervals.iter().map(|i| i.edp_bytes).sum()
    }

    pub fn dram_read(&self) -> u64 {
        self.intervals.iter().map(|i| i.dram_read).sum()
    }

    pub fn dram_write(&self) -> u64 {
        self.intervals.iter().map(|i| i.dram_write).sum()
    }

    pub fn time_in(&self, s: PackageCState) -> i64 {
        self.intervals.iter().filter(|i| i.kind.steady_state() == Some(s)).map(|i| i.duration_ns()).sum()
    }

    pub fn count_steady(&self, s: PackageCState) -> usize {
        self.intervals.iter().filter(|i| i.kind.steady_state() == Some(s)).count()
    }

    /// Intervals are contiguous and cover `[0, duration]` exactly.
    pub fn check_coverage(&self) -> Result<()> {
        let mut t = 0;
        for i in &self.intervals {
            if i.start_ns != t || i.end_ns <= i.start_ns {
                return Err(Error::Consistency(format!(
                    "window {}: interval [{}, {}) breaks coverage at {}",
                    self.window_index, i.start_ns, i.end_ns, t
                )));
            }
            t = i.end_ns;
        }
        if t != self.duration_ns {
            return Err(Error::Consistency(format!("window {} covers {t} of {} ns", self.window_index, self.duration_ns)));
        }
        Ok(())
    }
}

/// A realised state change, with latencies clipped to the span it was carved from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub window_index: usize,
    pub from: PackageCState,
    pub to: PackageCState,
    pub exit_ns: i64,
    pub entry_ns: i64,
    pub exit_power_mw: f64,
    pub entry_power_mw: f64,
}

impl TransitionEvent {
    pub fn energy_j(&self) -> f64 {
        (self.exit_power_mw * self.exit_ns as f64 + self.entry_power_mw * self.entry_ns as f64) * 1e-12
    }
}

/// Carves state-change intervals from the start of each new steady run. The
/// first window wraps around from the last one so a periodic run is consistent.
pub fn carve_transitions<'a>(
    windows: &mut [WindowTimeline],
    profile_for: impl Fn(Scheme) -> Result<&'a PowerProfile>,
) -> Result<()> {
    let Some(mut prev) = windows.last().and_then(|w| w.intervals.last()).and_then(|i| i.kind.steady_state()) else {
        return Ok(());
    };
    for w in windows.iter_mut() {
        let profile = profile_for(w.scheme)?;
        let mut out = Vec::with_capacity(w.intervals.len() + 4);
        for iv in w.intervals.drain(..) {
            let Some(state) = iv.kind.steady_state() else {
                out.push(iv);
                continue;
            };
            if state == prev {
                out.push(iv);
                continue;
            }
            let spec = profile.transition(prev, state);
            let lat = secs_to_ns(spec.latency());
            let len = iv.duration_ns();
            let cut = lat.min(len);
            if cut <= 0 {
                prev = state;
                out.push(iv);
                continue;
            }
            let frac = cut as f64 / len as f64;
            let split = |x: u64| -> u64 { ((x as f64) * frac).round() as u64 };
            let split_ns = |x: i64| -> i64 { ((x as f64) * frac).round() as i64 };
            let head = Interval {
                kind: IntervalKind::Transition { from: prev, to: state },
                start_ns: iv.start_ns,
                end_ns: iv.start_ns + cut,
                dram_read: split(iv.dram_read),
                dram_write: split(iv.dram_write),
                edp_bytes: split(iv.edp_bytes),
                drfb_ns: split_ns(iv.drfb_ns),
                decode_ns: split_ns(iv.decode_ns),
                projection_ns: split_ns(iv.projection_ns),
            };
            if cut < len {
                out.push(Interval {
                    kind: iv.kind,
                    start_ns: head.end_ns,
                    end_ns: iv.end_ns,
                    dram_read: iv.dram_read - head.dram_read,
                    dram_write: iv.dram_write - head.dram_write,
                    edp_bytes: iv.edp_bytes - head.edp_bytes,
                    drfb_ns: iv.drfb_ns - head.drfb_ns,
                    decode_ns: iv.decode_ns - head.decode_ns,
                    projection_ns: iv.projection_ns - head.projection_ns,
                });
                let tail = out.pop().unwrap();
                out.push(head);
                out.push(tail);
            } else {
                out.push(Interval { kind: head.kind, end_ns: iv.end_ns, ..iv });
            }
            prev = state;
        }
        w.intervals = out;
    }
    Ok(())
}

/// Realised transition events, read back from a carved timeline.
pub fn transition_events<'a>(
    windows: &[WindowTimeline],
    profile_for: impl Fn(Scheme) -> Result<&'a PowerProfile>,
) -> Result<Vec<TransitionEvent>> {
    let mut ev = Vec::new();
    for w in windows {
        let profile = profile_for(w.scheme)?;
        for iv in &w.intervals {
            if let IntervalKind::Transition { from, to } = iv.kind {
                let spec = profile.transition(from, to);
                let len = iv.duration_ns();
                let exit_ns = secs_to_ns(spec.exit_latency_s).min(len);
                ev.push(TransitionEvent {
                    window_index: w.window_index,
                    from,
                    to,
                    exit_ns,
                    entry_ns: len - exit_ns,
                    exit_power_mw: spec.exit_power_mw,
                    entry_power_mw: spec.entry_power_mw,
                });
            }
        }
    }
    Ok(ev)
}

fn ensure_valid(w: &WorkloadSpec, sys: &SystemConfig) -> Result<()> {
    let v = validate_config(w, sys);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Violations(v))
    }
}

/// Steady-state windows for the workload with transitions carved using each
/// window's profile from the calibration.
pub fn build_timelines(w: &WorkloadSpec, sys: &SystemConfig, cal: &CalibrationSet) -> Result<Vec<WindowTimeline>> {
    ensure_valid(w, sys)?;
    let plans = plan_windows(w, sys)?;
    build_from_plans(&plans, |s| cal.profile(s))
}

pub(crate) fn build_from_plans<'a>(
    plans: &[WindowPlan],
    profile_for: impl Fn(Scheme) -> Result<&'a PowerProfile>,
) -> Result<Vec<WindowTimeline>> {
    let mut windows = plans.iter().map(analytic::build_window).collect::<Result<Vec<_>>>()?;
    carve_transitions(&mut windows, profile_for)?;
    Ok(windows)
}

fn build_single(w: &WorkloadSpec, sys: &SystemConfig, profile: &PowerProfile, scheme: Scheme) -> Result<Vec<WindowTimeline>> {
    if w.scheme != scheme {
        return Err(Error::UnsupportedScheme(format!("{} requested from the {scheme} builder", w.scheme)));
    }
    if scheme.needs_drfb() && !w.display.drfb_present {
        return Err(Error::UnsupportedScheme(format!("{scheme} needs a panel with a double frame buffer")));
    }
    ensure_valid(w, sys)?;
    let plans = plan_windows(w, sys)?;
    build_from_plans(&plans, |_| Ok(profile))
}

/// Conventional pipeline: decode into DRAM, stream at the panel rate.
pub fn build_baseline(
    w: &WorkloadSpec,
    sys: &SystemConfig,
    profile: &PowerProfile,
    psr_alternate_windows: bool,
) -> Result<Vec<WindowTimeline>> {
    let w = WorkloadSpec { psr_alternate_windows, ..w.clone() };
    build_single(&w, sys, profile, Scheme::Baseline)
}

/// Decoder feeds the display controller directly; link runs at the panel rate.
pub fn build_bypass(w: &WorkloadSpec, sys: &SystemConfig, profile: &PowerProfile) -> Result<Vec<WindowTimeline>> {
    build_single(w, sys, profile, Scheme::BypassOnly)
}

/// Frames still pass through DRAM but cross the link at its peak rate.
pub fn build_bursting(w: &WorkloadSpec, sys: &SystemConfig, profile: &PowerProfile) -> Result<Vec<WindowTimeline>> {
    build_single(w, sys, profile, Scheme::BurstingOnly)
}

/// Decoder output bursts straight to the panel at the link's peak rate.
pub fn build_burstlink(w: &WorkloadSpec, sys: &SystemConfig, profile: &PowerProfile) -> Result<Vec<WindowTimeline>> {
    build_single(w, sys, profile, Scheme::Burstlink)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residencies {
    pub states: BTreeMap<PackageCState, f64>,
    pub transition_fraction: f64,
    pub total_ns: i64,
}

impl Residencies {
    pub fn get(&self, s: PackageCState) -> f64 {
        self.states.get(&s).copied().unwrap_or(0.0)
    }

    /// Steady fractions plus the transition fraction.
    pub fn total(&self) -> f64 {
        self.states.values().sum::<f64>() + self.transition_fraction
    }
}

/// Fraction of simulated time spent in each steady state.
pub fn residencies(windows: &[WindowTimeline]) -> Residencies {
    let mut ns: BTreeMap<PackageCState, i64> = BTreeMap::new();
    let mut tr = 0i64;
    let mut total = 0i64;
    for w in windows {
        for iv in &w.intervals {
            let d = iv.duration_ns();
            total += d;
            match iv.kind.steady_state() {
                Some(s) => *ns.entry(s).or_default() += d,
                None => tr += d,
            }
        }
    }
    let t = total.max(1) as f64;
    Residencies {
        states: ns.into_iter().map(|(s, d)| (s, d as f64 / t)).collect(),
        transition_fraction: tr as f64 / t,
        total_ns: total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Resolution;
    use crate::presets;

    fn measured() -> CalibrationSet {
        presets::measured_calibration()
    }

    #[test]
    fn fhd_fetch_count_is_twelve() {
        let cal = measured();
        let w = WorkloadSpec::new(Resolution::FHD, 60, 30, Scheme::Baseline);
        let t = build_baseline(&w, &cal.system, cal.profile(Scheme::Baseline).unwrap(), false).unwrap();
        // Repeat window has no C0, so every fetch is its own C2 run.
        assert_eq!(t[1].count_steady(PackageCState::C2), 12);
    }

    #[test]
    fn measured_baseline_residencies() {
        let cal = measured();
        let w = WorkloadSpec::new(Resolution::FHD, 60, 30, Scheme::Baseline);
        let t = build_baseline(&w, &cal.system, cal.profile(Scheme::Baseline).unwrap(), false).unwrap();
        let r = residencies(&t);
        assert!((r.get(PackageCState::C0) - 0.09).abs() < 0.02);
        assert!((r.get(PackageCState::C2) - 0.11).abs() < 0.02);
        assert!((r.get(PackageCState::C8) - 0.80).abs() < 0.02);
    }

    #[test]
    fn psr_alternate_repeat_window_is_all_c9() {
        let cal = measured();
        let w = WorkloadSpec::new(Resolution::FHD, 60, 30, Scheme::Baseline);
        let t = build_baseline(&w, &cal.system, cal.profile(Scheme::Baseline).unwrap(), true).unwrap();
        let rep = &t[1];
        assert_eq!(rep.displayed_frame, DisplayedFrame::Repeated);
        let steady: Vec<_> = rep.intervals.iter().filter_map(|i| i.kind.steady_state()).collect();
        assert_eq!(steady, vec![PackageCState::C9]);
        assert_eq!(rep.edp_bytes(), 0);
    }

    #[test]
    fn measured_burstlink_residencies() {
        let cal = measured();
        let w = WorkloadSpec::new(Resolution::FHD, 60, 30, Scheme::Burstlink);
        let t = build_burstlink(&w, &cal.system, cal.profile(Scheme::Burstlink).unwrap()).unwrap();
        let r = residencies(&t);
        assert!((r.get(PackageCState::C0) - 0.02).abs() < 0.02);
        assert!((r.get(PackageCState::C7) + r.get(PackageCState::C7P) - 0.19).abs() < 0.02);
        assert!((r.get(PackageCState::C9) - 0.79).abs() < 0.02);
        assert_eq!(t.iter().map(|w| w.dram_write()).sum::<u64>(), 0);
    }

    #[test]
    fn bypass_writes_nothing_and_covers_window() {
        let cal = presets::default_calibration();
        let w = WorkloadSpec::new(Resolution::FHD, 60, 30, Scheme::BypassOnly);
        let t = build_bypass(&w, &cal.system, cal.profile(Scheme::BypassOnly).unwrap()).unwrap();
        for win in &t {
            win.check_coverage().unwrap();
            assert_eq!(win.dram_write(), 0);
        }
    }

    #[test]
    fn bursting_4k_leaves_c9_majority() {
        let cal = presets::default_calibration();
        let w = WorkloadSpec::new(Resolution::UHD_4K, 60, 60, Scheme::BurstingOnly);
        let t = build_bursting(&w, &cal.system, cal.profile(Scheme::BurstingOnly).unwrap()).unwrap();
        let r = residencies(&t[..1]);
        assert!(r.get(PackageCState::C9) >= 0.50, "{:?}", r);
    }

    #[test]
    fn builder_rejects_wrong_scheme() {
        let cal = measured();
        let w = WorkloadSpec::new(Resolution::FHD, 60, 30, Scheme::Burstlink);
        assert!(matches!(
            build_bypass(&w, &cal.system, cal.profile(Scheme::BypassOnly).unwrap()),
            Err(Error::UnsupportedScheme(_))
        ));
        let mut w = WorkloadSpec::new(Resolution::FHD, 60, 30, Scheme::Burstlink);
        w.display.drfb_present = false;
        assert!(matches!(
            build_burstlink(&w, &cal.system, cal.profile(Scheme::Burstlink).unwrap()),
            Err(Error::UnsupportedScheme(_))
        ));
    }

    #[test]
    fn single_c9_window_residency() {
        let w = WindowTimeline {
            window_index: 0,
            duration_ns: 1000,
            displayed_frame: DisplayedFrame::Repeated,
            scheme: Scheme::Baseline,
            intervals: vec![Interval {
                kind: IntervalKind::Steady { state: PackageCState::C9 },
                start_ns: 0,
                end_ns: 1000,
                dram_read: 0,
                dram_write: 0,
                edp_bytes: 0,
                drfb_ns: 0,
                decode_ns: 0,
                projection_ns: 0,
            }],
        };
        let r = residencies(&[w]);
        assert_eq!(r.get(PackageCState::C9), 1.0);
        assert_eq!(r.transition_fraction, 0.0);
    }
}
