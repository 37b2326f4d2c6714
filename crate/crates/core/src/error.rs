use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeconvError {
    #[error("t = {t} lies outside the domain [0, {t_end}]")]
    Domain { t: f64, t_end: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("signals live on different grids")]
    GridMismatch,

    #[error("expected {expected} values for the grid, got {got}")]
    Length { expected: usize, got: usize },

    #[error("relative error undefined: reference signal is identically zero")]
    ZeroReference,

    #[error("step h = {h} does not fit the domain (needs h < T/2 = {half})")]
    StepTooLarge { h: f64, half: f64 },

    #[error("singular system: diagonal entry {value:e} at row {row}")]
    SingularSystem { row: usize, value: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("discrepancy never reaches target {target:e} for eps in [{lo:e}, {hi:e}]")]
    NoCrossing { target: f64, lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, DeconvError>;
