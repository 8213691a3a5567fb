use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("no movement detected (peak speed {peak:.3e} below floor {floor:.3e})")]
    NoMovement { peak: f64, floor: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("stream error: {0}")]
    Stream(String),
    #[error("degenerate test: {0}")]
    DegenerateTest(String),
    #[error("unknown schedule {0:?}")]
    UnknownSchedule(String),
    #[error("session error: {0}")]
    Session(String),
    #[error("session log version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt session log: {0}")]
    CorruptLog(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
