//! Resolving `--preset` / `--config` / `--calibration` into a runnable workload.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use vidpower::scenarios::ScenarioOverlay;
use vidpower::{presets, CalibrationSet, Resolution, Scheme, VideoKind, WorkloadSpec};

use crate::CliError;

/// A simulation config file. A bare workload object is also accepted.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub workload: WorkloadSpec,
    /// Calibration file, relative to the config file.
    #[serde(default)]
    pub calibration: Option<PathBuf>,
    /// Dirty-fraction trace for single-plane bursting, relative to the config file.
    #[serde(default)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub label: String,
    pub workload: WorkloadSpec,
    pub calibration: CalibrationSet,
    pub trace: Option<Vec<f64>>,
    pub config_paths: Vec<String>,
    pub preset: Option<String>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn relative(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

pub fn load_calibration(path: &Path) -> Result<CalibrationSet, CliError> {
    CalibrationSet::from_json(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = read(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let parsed = if value.get("workload").is_some() {
        serde_json::from_value::<RunConfig>(value)
    } else {
        serde_json::from_value::<WorkloadSpec>(value).map(|workload| RunConfig { workload, calibration: None, trace: None })
    };
    parsed.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Picks the workload from a preset or a config file, then applies the
/// calibration and window overrides.
pub fn resolve(
    preset: Option<&str>,
    config: Option<&Path>,
    calibration: Option<&Path>,
    windows: Option<usize>,
) -> Result<Resolved, CliError> {
    let mut r = match (preset, config) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --preset or --config, not both".into())),
        (None, None) => return Err(CliError::Usage("one of --preset or --config is required".into())),
        (Some(name), None) => {
            let p = presets::preset(name).map_err(|e| CliError::Usage(e.to_string()))?;
            Resolved {
                label: p.name.clone(),
                workload: p.workload,
                calibration: p.calibration,
                trace: None,
                config_paths: Vec::new(),
                preset: Some(p.name),
            }
        }
        (None, Some(path)) => {
            let rc = load_run_config(path)?;
            let calibration = match &rc.calibration {
                Some(c) => load_calibration(&relative(path, c))?,
                None => presets::default_calibration(),
            };
            let trace = match &rc.trace {
                Some(t) => {
                    let p = relative(path, t);
                    Some(vidpower::scenarios::load_trace(&p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?)
                }
                None => None,
            };
            Resolved {
                label: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "config".into()),
                workload: rc.workload,
                calibration,
                trace,
                config_paths: vec![path.display().to_string()],
                preset: None,
            }
        }
    };
    if let Some(c) = calibration {
        r.calibration = load_calibration(c)?;
        r.config_paths.push(c.display().to_string());
    }
    if let Some(n) = windows {
        if n == 0 {
            return Err(CliError::Usage("--windows must be at least 1".into()));
        }
        r.workload.windows_to_simulate = Some(n);
    }
    Ok(r)
}

/// A preset name or a path to a config file.
pub fn resolve_either(arg: &str, calibration: Option<&Path>, windows: Option<usize>) -> Result<Resolved, CliError> {
    let p = Path::new(arg);
    if p.is_file() {
        resolve(None, Some(p), calibration, windows)
    } else {
        resolve(Some(arg), None, calibration, windows)
    }
}

/// Sweep axes. Every combination of resolution, FPS, scheme and overlay is one
/// grid point.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub resolutions: Vec<Resolution>,
    pub fps: Vec<u32>,
    #[serde(default = "default_refresh")]
    pub refresh_hz: u32,
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_overlays")]
    pub overlays: Vec<ScenarioOverlay>,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<VideoKind>,
    #[serde(default)]
    pub windows: Option<usize>,
    #[serde(default)]
    pub calibration: Option<PathBuf>,
}

fn default_refresh() -> u32 {
    60
}
fn default_overlays() -> Vec<ScenarioOverlay> {
    vec![ScenarioOverlay::default()]
}
fn default_kinds() -> Vec<VideoKind> {
    vec![VideoKind::Planar]
}

const ALL_RES: [Resolution; 4] = [Resolution::FHD, Resolution::QHD, Resolution::UHD_4K, Resolution::UHD_5K];

/// Built-in sweeps: `schemes` (resolution × FPS × scheme), `vr`, `fbc`, `batching`.
pub fn sweep_preset(name: &str) -> Result<SweepConfig, CliError> {
    let base = SweepConfig {
        resolutions: ALL_RES.to_vec(),
        fps: vec![30, 60],
        refresh_hz: 60,
        schemes: Scheme::ALL.to_vec(),
        overlays: default_overlays(),
        kinds: default_kinds(),
        windows: None,
        calibration: None,
    };
    Ok(match name {
        "schemes" => base,
        "vr" => SweepConfig { fps: vec![30], kinds: vec![VideoKind::Vr360], ..base },
        "fbc" => SweepConfig {
            fps: vec![60],
            schemes: vec![Scheme::Baseline],
            overlays: [1.0, 0.75, 0.5, 0.35]
                .into_iter()
                .map(|r| ScenarioOverlay { fbc_ratio: r, ..ScenarioOverlay::default() })
                .collect(),
            ..base
        },
        "batching" => SweepConfig {
            fps: vec![60],
            schemes: vec![Scheme::Baseline],
            overlays: [1, 2, 4]
                .into_iter()
                .map(|b| ScenarioOverlay {
                    batch_frames: b,
                    batch_decode_boost: if b > 1 { presets::BATCH_DECODE_BOOST } else { 1.0 },
                    ..ScenarioOverlay::default()
                })
                .collect(),
            ..base
        },
        other => return Err(CliError::Usage(format!("unknown sweep preset '{other}'; try schemes, vr, fbc or batching"))),
    })
}

pub fn load_sweep(path: &Path) -> Result<SweepConfig, CliError> {
    let mut s: SweepConfig =
        serde_json::from_str(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if let Some(c) = s.calibration.take() {
        s.calibration = Some(relative(path, &c));
    }
    Ok(s)
}

impl SweepConfig {
    pub fn points(&self) -> Vec<WorkloadSpec> {
        let mut out = Vec::new();
        for kind in &self.kinds {
            for res in &self.resolutions {
                for fps in &self.fps {
                    for ov in &self.overlays {
                        for s in &self.schemes {
                            let mut w = WorkloadSpec::new(*res, self.refresh_hz, *fps, *s);
                            w.kind = *kind;
                            w.overlay = ov.clone();
                            w.windows_to_simulate = self.windows;
                            out.push(w);
                        }
                    }
                }
            }
        }
        out
    }
}
