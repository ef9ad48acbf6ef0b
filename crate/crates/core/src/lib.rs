//! Power and C-state simulation of video playback on a mobile display pipeline.
//!
//! Four schemes are modeled: the conventional DRAM-backed pipeline, frame
//! buffer bypass, frame bursting and their combination (`Scheme::Burstlink`).
//! Each frame window becomes a contiguous list of package C-state intervals,
//! and energy is the residency-weighted sum of per-state powers plus
//! transition, DRAM and adder terms.

pub mod calibrate;
pub mod cstates;
pub mod error;
pub mod model;
pub mod power;
pub mod presets;
pub mod report;
pub mod scenarios;
pub mod timeline;
pub mod tuning;

pub use cstates::{CalibrationSet, PackageCState, PowerProfile};
pub use error::{Error, Result};
pub use model::{DisplayConfig, Resolution, Scheme, SystemConfig, VideoKind, WorkloadSpec};
pub use power::EnergyReport;
