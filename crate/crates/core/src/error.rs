use thiserror::Error;

use crate::cstates::PackageCState;
use crate::model::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("config violates {} invariant(s): {}", .0.len(), join_codes(.0))]
    Violations(Vec<Violation>),

    #[error("infeasible config: {0}")]
    Infeasible(String),

    #[error("unsupported scheme: {0}")]
    UnsupportedScheme(String),

    #[error("inconsistent component activity: {0}")]
    Consistency(String),

    #[error("calibration has no entry for state {0}")]
    MissingState(PackageCState),

    #[error("calibration inconsistency: {0}")]
    CalibrationInconsistency(String),

    #[error("under-determined fit; unidentifiable states: {}", fmt_states(.0))]
    UnderDetermined(Vec<PackageCState>),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn join_codes(v: &[Violation]) -> String {
    v.iter().map(|x| x.code.as_str()).collect::<Vec<_>>().join(", ")
}

fn fmt_states(v: &[PackageCState]) -> String {
    v.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
}
