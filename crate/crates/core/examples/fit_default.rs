//! Regenerates `calibrations/measured.json`, `calibrations/default.json` and
//! `calibrations/default_residuals.json`.
//!
//! ```text
//! cargo run --release -p vidpower --example fit_default            # fit and write
//! cargo run --release -p vidpower --example fit_default -- --check # score the seed only
//! ```

use std::path::PathBuf;

use vidpower::{presets, tuning};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../calibrations");
    let seed = presets::seed_calibration();
    if std::env::args().any(|a| a == "--check") {
        let r = tuning::evaluate(&seed, &seed)?;
        println!("{}", serde_json::to_string_pretty(&r)?);
        return Ok(());
    }
    std::fs::write(dir.join("measured.json"), presets::build_measured_calibration().to_json() + "\n")?;
    let (cal, report) = tuning::fit_default(&seed, 200)?;
    std::fs::write(dir.join("default.json"), cal.to_json() + "\n")?;
    std::fs::write(dir.join("default_residuals.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    for t in &report.targets {
        println!("{:<36} target {:>5.1}%  achieved {:>7.3}%  residual {:+.3} pp", t.name, t.target_pct, t.achieved_pct, t.residual_pp);
    }
    for v in &report.violations {
        println!("violation: {v}");
    }
    Ok(())
}
