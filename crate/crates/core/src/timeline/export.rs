//! CSV and SVG renderings of window timelines.

use std::fmt::Write as _;

use crate::cstates::PackageCState;
use crate::error::Result;

use super::{IntervalKind, WindowTimeline};

const LABEL_W: f64 = 70.0;
const PLOT_W: f64 = 900.0;
const ROW_H: f64 = 26.0;
const BAR_H: f64 = 18.0;
const TOP: f64 = 34.0;
const AXIS_H: f64 = 28.0;
const LEGEND_H: f64 = 46.0;

/// Fixed fill per state, shallow states warm, deep states cool.
pub fn state_color(s: PackageCState) -> &'static str {
    match s {
        PackageCState::C0 => "#d62728",
        PackageCState::C2 => "#ff7f0e",
        PackageCState::C3 => "#e7ba52",
        PackageCState::C6 => "#bcbd22",
        PackageCState::C7 => "#2ca02c",
        PackageCState::C7P => "#98df8a",
        PackageCState::C8 => "#1f77b4",
        PackageCState::C9 => "#9467bd",
        PackageCState::C10 => "#17becf",
    }
}

pub const TRANSITION_COLOR: &str = "#7f7f7f";

/// `window,kind,state,start_ns,end_ns,dram_read,dram_write,edp_bytes`.
/// Transitions are written as `from->to` in the state column.
pub fn timeline_csv(windows: &[WindowTimeline]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["window", "kind", "state", "start_ns", "end_ns", "dram_read", "dram_write", "edp_bytes"])?;
    for win in windows {
        for iv in &win.intervals {
            let kind = match iv.kind {
                IntervalKind::Steady { .. } => "steady",
                IntervalKind::Transition { .. } => "transition",
            };
            w.write_record([
                win.window_index.to_string(),
                kind.to_string(),
                iv.kind.label(),
                iv.start_ns.to_string(),
                iv.end_ns.to_string(),
                iv.dram_read.to_string(),
                iv.dram_write.to_string(),
                iv.edp_bytes.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Gantt chart with one row per window (at most `max_rows`), a millisecond
/// axis and a legend of the states that appear.
pub fn timeline_svg(windows: &[WindowTimeline], title: &str, max_rows: usize) -> String {
    let rows = &windows[..windows.len().min(max_rows.max(1))];
    let span_ns = rows.iter().map(|w| w.duration_ns).max().unwrap_or(1).max(1) as f64;
    let width = LABEL_W + PLOT_W + 20.0;
    let height = TOP + rows.len() as f64 * ROW_H + AXIS_H + LEGEND_H;
    let x = |ns: i64| LABEL_W + ns as f64 / span_ns * PLOT_W;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="monospace" font-size="11">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(s, r#"<text x="{LABEL_W}" y="18" font-size="13">{}</text>"#, esc(title));

    let mut seen = [false; PackageCState::ALL.len()];
    let mut any_transition = false;
    for (r, win) in rows.iter().enumerate() {
        let y = TOP + r as f64 * ROW_H;
        let _ = writeln!(s, r#"<text x="4" y="{:.1}">w{} {}</text>"#, y + BAR_H - 5.0, win.window_index, frame_tag(win));
        for iv in &win.intervals {
            let (fill, label) = match iv.kind {
                IntervalKind::Steady { state } => {
                    seen[state.depth()] = true;
                    (state_color(state), state.to_string())
                }
                IntervalKind::Transition { .. } => {
                    any_transition = true;
                    (TRANSITION_COLOR, iv.kind.label())
                }
            };
            let x0 = x(iv.start_ns);
            let w = (x(iv.end_ns) - x0).max(0.3);
            let _ = writeln!(
                s,
                r#"<rect x="{x0:.2}" y="{y:.1}" width="{w:.2}" height="{BAR_H}" fill="{fill}"><title>{} {:.3}-{:.3} ms</title></rect>"#,
                esc(&label),
                iv.start_ns as f64 * 1e-6,
                iv.end_ns as f64 * 1e-6
            );
        }
    }

    let axis_y = TOP + rows.len() as f64 * ROW_H + 4.0;
    let _ = writeln!(s, r##"<line x1="{LABEL_W}" y1="{axis_y:.1}" x2="{:.1}" y2="{axis_y:.1}" stroke="#333"/>"##, LABEL_W + PLOT_W);
    let span_ms = span_ns * 1e-6;
    let step = if span_ms > 20.0 { 5.0 } else if span_ms > 8.0 { 2.0 } else { 1.0 };
    let mut t = 0.0;
    while t <= span_ms + 1e-9 {
        let px = LABEL_W + t / span_ms * PLOT_W;
        let _ = writeln!(s, r##"<line x1="{px:.1}" y1="{axis_y:.1}" x2="{px:.1}" y2="{:.1}" stroke="#333"/>"##, axis_y + 4.0);
        let _ = writeln!(s, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{t:.0}</text>"#, axis_y + 16.0);
        t += step;
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">ms</text>"#, LABEL_W + PLOT_W + 18.0, axis_y + 16.0);

    let mut lx = LABEL_W;
    let ly = axis_y + AXIS_H;
    for st in PackageCState::ALL {
        if !seen[st.depth()] {
            continue;
        }
        let _ = writeln!(s, r#"<rect x="{lx:.1}" y="{ly:.1}" width="12" height="12" fill="{}"/>"#, state_color(st));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{st}</text>"#, lx + 16.0, ly + 10.0);
        lx += 64.0;
    }
    if any_transition {
        let _ = writeln!(s, r#"<rect x="{lx:.1}" y="{ly:.1}" width="12" height="12" fill="{TRANSITION_COLOR}"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">transition</text>"#, lx + 16.0, ly + 10.0);
    }
    s.push_str("</svg>\n");
    s
}

fn frame_tag(w: &WindowTimeline) -> &'static str {
    match w.displayed_frame {
        super::DisplayedFrame::New => "new",
        super::DisplayedFrame::Repeated => "rep",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Resolution, Scheme, WorkloadSpec};
    use crate::presets;

    fn sample() -> Vec<WindowTimeline> {
        let cal = presets::default_calibration();
        let w = WorkloadSpec::new(Resolution::FHD, 60, 30, Scheme::Burstlink);
        crate::timeline::build_timelines(&w, &cal.system, &cal).unwrap()
    }

    #[test]
    fn csv_rows_match_intervals() {
        let t = sample();
        let text = timeline_csv(&t).unwrap();
        let n: usize = t.iter().map(|w| w.intervals.len()).sum();
        assert_eq!(text.lines().count(), n + 1);
        assert!(text.starts_with("window,kind,state,start_ns,end_ns,dram_read,dram_write,edp_bytes\n"));
    }

    #[test]
    fn svg_has_a_rect_per_interval_and_legend() {
        let t = sample();
        let svg = timeline_svg(&t, "fhd30 <burstlink>", 2);
        let bars: usize = t[..2].iter().map(|w| w.intervals.len()).sum();
        assert_eq!(svg.matches("<title>").count(), bars);
        assert!(svg.contains("&lt;burstlink&gt;"));
        assert!(svg.contains(">C9</text>"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
