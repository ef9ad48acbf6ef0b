//! Writes the bundled synthetic dirty-fraction traces under `traces/` and
//! prints the bursting reduction each one yields with the default calibration.
//!
//! The traces are synthetic stand-ins: 120 windows at 60 Hz, seeded so the
//! files are reproducible.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidpower::{presets, scenarios, Resolution, Scheme, WorkloadSpec};

const WINDOWS: usize = 120;

/// Casual game: small sprites move most windows, with an occasional scene change.
fn gaming(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..WINDOWS)
        .map(|_| {
            let r: f64 = rng.random();
            if r < 0.02 {
                rng.random_range(0.3..0.6)
            } else if r < 0.7 {
                rng.random_range(0.005..0.04)
            } else {
                0.0
            }
        })
        .collect()
}

/// Video call: a 30 FPS video tile plus occasional UI changes.
fn conferencing(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..WINDOWS)
        .map(|i| {
            let tile = if i % 2 == 0 { 0.04 } else { 0.0 };
            let ui = if rng.random_bool(0.1) { rng.random_range(0.005..0.03) } else { 0.0 };
            f64::min(1.0, tile + ui)
        })
        .collect()
}

/// Office work: typing and scrolling, with full redraws now and then.
fn productivity(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..WINDOWS)
        .map(|_| {
            let r: f64 = rng.random();
            if r < 0.01 {
                1.0
            } else if r < 0.3 {
                rng.random_range(0.005..0.05)
            } else {
                0.0
            }
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../traces");
    let cal = presets::default_calibration();
    let w = WorkloadSpec::new(Resolution::FHD, 60, 60, Scheme::BurstingOnly);
    let gens: [(&str, fn(&mut ChaCha8Rng) -> Vec<f64>, u64); 3] =
        [("gaming", gaming, 1), ("conferencing", conferencing, 2), ("productivity", productivity, 3)];
    for (name, f, seed) in gens {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = f(&mut rng);
        let mut text = String::from("window_index,dirty_fraction\n");
        for (i, d) in t.iter().enumerate() {
            text += &format!("{i},{d:.4}\n");
        }
        std::fs::write(dir.join(format!("{name}.csv")), &text)?;
        let trace = scenarios::parse_trace(&text)?;
        let r = scenarios::single_plane_burst(&w, &trace, &cal.system, &cal)?;
        println!("{name:<13} reduction {:.2}%", r.reference.map(|x| x.reduction_pct).unwrap_or(0.0));
    }
    Ok(())
}
