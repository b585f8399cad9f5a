use thiserror::Error;

/// Errors produced by the giantatom library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid waveguide model: {0}")]
    InvalidModel(String),

    #[error("invalid target profile: {0}")]
    InvalidProfile(String),

    #[error("momentum {k} lies outside the cutoff ±{k_max}")]
    OutsideCutoff { k: f64, k_max: f64 },

    #[error("invalid coupling sequence: {0}")]
    InvalidSequence(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("norm drift {drift:.3e} at t = {t} exceeds tolerance {tolerance:.1e}")]
    NormDrift { drift: f64, t: f64, tolerance: f64 },

    #[error("no root of E - Σ(E) in the window [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },

    #[error("atomic frequency {omega_q} is outside the band gap [{lo}, {hi}]")]
    OutsideGap { omega_q: f64, lo: f64, hi: f64 },

    #[error("quantity is undefined: {0}")]
    Undefined(String),

    #[error("no feasible candidate found within {evaluations} evaluations")]
    NoFeasibleCandidate { evaluations: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
