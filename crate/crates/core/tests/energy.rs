use vidpower::power::window_energy_breakdown;
use vidpower::timeline::{build_timelines, transition_events};
use vidpower::{presets, Scheme};

#[test]
fn default_transitions_stay_under_one_percent_on_measured_configs() {
    let cal = presets::default_calibration();
    for scheme in [Scheme::Baseline, Scheme::Burstlink] {
        let w = presets::measured_workload(scheme);
        let windows = build_timelines(&w, &cal.system, &cal).unwrap();
        let events = transition_events(&windows, |s| cal.profile(s)).unwrap();
        for win in &windows {
            let total = window_energy_breakdown(win, cal.profile(win.scheme).unwrap(), &cal.system, &w.display).unwrap().energy.total;
            let tr: f64 = events.iter().filter(|e| e.window_index == win.window_index).map(|e| e.energy_j()).sum();
            assert!(tr / total < 0.01, "{scheme} window {}: {:.3}%", win.window_index, tr / total * 100.0);
        }
    }
}

#[test]
fn measured_transition_energy_is_zero() {
    let cal = presets::measured_calibration();
    let w = presets::measured_workload(Scheme::Baseline);
    let windows = build_timelines(&w, &cal.system, &cal).unwrap();
    let events = transition_events(&windows, |s| cal.profile(s)).unwrap();
    assert!(events.iter().all(|e| e.energy_j() == 0.0));
}
