use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid thermal parameters: {0}")]
    InvalidParams(String),

    #[error("invalid resistance schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid cycle profile: {0}")]
    InvalidProfile(String),

    #[error("non-finite temperature {0}")]
    NonFiniteTemperature(f64),

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("no cycles")]
    NoCycles,

    #[error("cycle {cycle}: CC phase too short for horizon (need {needed} samples, found {found})")]
    CcPhaseTooShort {
        cycle: usize,
        needed: usize,
        found: usize,
    },

    #[error("degenerate temperature range: t_min = t_max = {0}")]
    DegenerateRange(f64),

    #[error("split offsets collide: {0:?}")]
    OffsetCollision([usize; 3]),

    #[error("empty batch")]
    EmptyBatch,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid training config: {0}")]
    InvalidConfig(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("fit failed for {form}: {reason}")]
    FitFailed { form: String, reason: String },

    #[error("cycle {0}: no detectable current step at CC start")]
    NoCurrentStep(usize),

    #[error("A2 crosses zero; offset calibration required")]
    A2CrossesZero,

    #[error("closed-form base vanishes at kbar = {0}")]
    VanishingBase(f64),

    #[error("mismatched curve supports: {0}")]
    SupportMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
