use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("profile has {count} tracked jumps, at most one is supported")]
    TooManyJumps { count: usize },

    #[error("profile violates the linear growth bound: {0}")]
    GrowthCheckFailed(String),

    #[error("interface jump is {jump}, expected 2 (p would be discontinuous at the interface)")]
    BrokenStefanContinuity { jump: f64 },

    #[error("classification input is NaN")]
    NanInput,

    #[error("no crossing of level {level} found {direction} of xi = {xi} inside [{left}, {right}]")]
    DomainExhausted {
        level: f64,
        xi: f64,
        direction: &'static str,
        left: f64,
        right: f64,
    },

    #[error("grid too narrow: need half-width {required}, have {available}")]
    GridTooNarrow { required: f64, available: f64 },

    #[error("interface must not move right here (xi_new = {xi_new} > xi_old = {xi_old})")]
    RightwardShift { xi_old: f64, xi_new: f64 },

    #[error("admissibility failed at step {step}: {detail}")]
    Inadmissible { step: usize, detail: String },

    #[error("interface history too short: need index {needed}, have {available}")]
    HistoryTooShort { needed: usize, available: usize },

    #[error("time window [{from}, {to}] leaves the simulated interval [0, {t_final}]")]
    WindowOutOfRange { from: f64, to: f64, t_final: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
