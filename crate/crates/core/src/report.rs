//! Report serialization and the run manifest embedded in every report.

use serde::{Deserialize, Serialize};

use crate::cstates::PackageCState;
use crate::error::Result;
use crate::power::EnergyReport;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_paths: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub out_dir: String,
    pub seed: u64,
    pub tool_version: String,
    pub calibration: String,
}

impl RunManifest {
    pub fn new(command: &str, calibration: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            config_paths: Vec::new(),
            preset: None,
            out_dir: String::new(),
            seed: 0,
            tool_version: TOOL_VERSION.to_string(),
            calibration: calibration.to_string(),
        }
    }
}

/// Column order of the flat CSV form.
pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "label",
        "scheme",
        "resolution",
        "refresh_hz",
        "video_fps",
        "kind",
        "calibration",
        "windows",
        "average_power_mw",
        "energy_per_second_j",
        "dram_j_per_s",
        "display_j_per_s",
        "others_j_per_s",
        "reduction_pct",
        "reference_scheme",
        "dram_read_bytes",
        "dram_write_bytes",
        "edp_bytes",
        "transition_fraction",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for s in PackageCState::ALL {
        h.push(format!("r_{}", s.name()));
    }
    h
}

pub fn csv_row(label: &str, r: &EnergyReport) -> Vec<String> {
    let e = &r.energy_per_second_j;
    let (red, rs) = match &r.reference {
        Some(x) => (format!("{:.6}", x.reduction_pct), x.scheme.name().to_string()),
        None => (String::new(), String::new()),
    };
    let kind = match r.kind {
        crate::model::VideoKind::Planar => "planar",
        crate::model::VideoKind::Vr360 => "vr360",
    };
    let mut row = vec![
        label.to_string(),
        r.scheme.name().to_string(),
        r.resolution.clone(),
        r.refresh_hz.to_string(),
        r.video_fps.to_string(),
        kind.to_string(),
        r.calibration.clone(),
        r.windows.to_string(),
        format!("{:.6}", r.average_power_mw),
        format!("{:.9}", e.total),
        format!("{:.9}", e.dram),
        format!("{:.9}", e.display),
        format!("{:.9}", e.others),
        red,
        rs,
        r.dram_read_bytes.to_string(),
        r.dram_write_bytes.to_string(),
        r.edp_bytes.to_string(),
        format!("{:.9}", r.transition_fraction),
    ];
    for s in PackageCState::ALL {
        row.push(format!("{:.9}", r.residencies.get(&s).copied().unwrap_or(0.0)));
    }
    row
}

/// Flat CSV with one row per labelled report.
pub fn reports_to_csv(rows: &[(String, EnergyReport)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header())?;
    for (label, r) in rows {
        w.write_record(csv_row(label, r))?;
    }
    let bytes = w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn report_to_json(r: &EnergyReport) -> String {
    serde_json::to_string_pretty(r).expect("report serializes") + "\n"
}
