use proptest::prelude::*;
use vidpower::calibrate::{nnls, parse_runs_csv, runs_to_csv, synthetic_runs};
use vidpower::cstates::{deepest_state, Activity};
use vidpower::power::{average_power, streaming_report};
use vidpower::scenarios::ScenarioOverlay;
use vidpower::timeline::{build_timelines, residencies, Residencies};
use vidpower::{presets, PackageCState, Resolution, Scheme, WorkloadSpec};

fn scheme() -> impl Strategy<Value = Scheme> {
    prop_oneof![Just(Scheme::Baseline), Just(Scheme::BypassOnly), Just(Scheme::BurstingOnly), Just(Scheme::Burstlink)]
}

fn preset_res() -> impl Strategy<Value = Resolution> {
    prop::sample::select(Resolution::PRESETS.iter().map(|(_, r)| *r).collect::<Vec<_>>())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn intervals_tile_each_window(res in preset_res(), fps in prop_oneof![Just(30u32), Just(60)], s in scheme()) {
        let cal = presets::default_calibration();
        let mut w = WorkloadSpec::new(res, 60, fps, s);
        w.windows_to_simulate = Some(4);
        for win in build_timelines(&w, &cal.system, &cal).unwrap() {
            let mut t = 0;
            for iv in &win.intervals {
                prop_assert_eq!(iv.start_ns, t);
                prop_assert!(iv.end_ns > iv.start_ns);
                t = iv.end_ns;
            }
            prop_assert_eq!(t, win.duration_ns);
        }
    }

    #[test]
    fn average_power_stays_within_state_range(weights in prop::collection::vec(0.0f64..1.0, 5)) {
        let total: f64 = weights.iter().sum();
        prop_assume!(total > 1e-6);
        let states = [PackageCState::C0, PackageCState::C2, PackageCState::C7, PackageCState::C8, PackageCState::C9];
        let cal = presets::measured_calibration();
        let profile = cal.profile(Scheme::Baseline).unwrap();
        let r = Residencies {
            states: states.iter().zip(&weights).map(|(s, w)| (*s, w / total)).collect(),
            transition_fraction: 0.0,
            total_ns: 1_000_000,
        };
        let p = average_power(profile, &r, &[]).unwrap();
        prop_assert!(p >= 1090.0 - 1e-9 && p <= 5940.0 + 1e-9);
    }

    #[test]
    fn playback_never_reaches_c10(s in scheme(), res in preset_res()) {
        let cal = presets::default_calibration();
        let mut w = WorkloadSpec::new(res, 60, 30, s);
        w.windows_to_simulate = Some(2);
        let r = residencies(&build_timelines(&w, &cal.system, &cal).unwrap());
        prop_assert!(r.get(PackageCState::C10) == 0.0);
    }

    #[test]
    fn overlay_json_round_trips(fbc in 0.05f64..=1.0, batch in 1u32..8, dirty in 0.0f64..=1.0, windowed: bool) {
        let o = ScenarioOverlay { fbc_ratio: fbc, batch_frames: batch, dirty_fraction: dirty, windowed, ..ScenarioOverlay::default() };
        let back: ScenarioOverlay = serde_json::from_str(&serde_json::to_string(&o).unwrap()).unwrap();
        prop_assert_eq!(back, o);
    }

    #[test]
    fn nnls_is_nonnegative_and_no_worse_than_zero(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 4..10),
        b in prop::collection::vec(-5.0f64..5.0, 10),
    ) {
        let n = rows.len();
        let a = nalgebra::DMatrix::from_fn(n, 3, |i, j| rows[i][j]);
        let b = nalgebra::DVector::from_iterator(n, b.into_iter().take(n));
        let x = nnls(&a, &b);
        prop_assert!(x.iter().all(|v| *v >= 0.0));
        prop_assert!((&a * &x - &b).norm() <= b.norm() + 1e-9);
    }

    #[test]
    fn runs_csv_round_trips(n in 1usize..20, seed: u64) {
        let states = [PackageCState::C0, PackageCState::C2, PackageCState::C8];
        let profile = presets::measured_calibration().profile(Scheme::Baseline).unwrap().clone();
        let runs = synthetic_runs(&profile, &states, n, 0.01, seed).unwrap();
        let back = parse_runs_csv(&runs_to_csv(&runs, &states).unwrap()).unwrap();
        prop_assert_eq!(back, runs);
    }
}

#[test]
fn idle_soc_with_self_refreshing_panel_sits_in_c9() {
    assert_eq!(deepest_state(&Activity::all_off()).unwrap(), PackageCState::C9);
}

#[test]
fn reports_scale_with_window_count() {
    let cal = presets::default_calibration();
    let mut w = WorkloadSpec::new(Resolution::FHD, 60, 30, Scheme::Burstlink);
    w.windows_to_simulate = Some(4);
    let a = streaming_report(&w, &cal.system, &cal).unwrap();
    w.windows_to_simulate = Some(40);
    let b = streaming_report(&w, &cal.system, &cal).unwrap();
    assert!((a.average_power_mw - b.average_power_mw).abs() < 1e-6);
    assert!((b.energy_total_j.total / a.energy_total_j.total - 10.0).abs() < 1e-9);
}
