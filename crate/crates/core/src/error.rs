use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("x = {x} is outside the open domain ({lower}, {upper})")]
    OutsideDomain { x: f64, lower: f64, upper: f64 },

    #[error("non-finite {what} at x = {x}")]
    NonFinite { what: &'static str, x: f64 },

    #[error("quadrature failed on [{from}, {to}]: {reason}")]
    Quadrature { from: f64, to: f64, reason: String },

    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("unknown model `{id}`; catalog: {catalog}")]
    UnknownModel { id: String, catalog: String },

    #[error("all {n} particles were killed in the same step at t = {time} (dt too large or N too small)")]
    SimultaneousExtinction { n: usize, time: f64 },

    #[error("eigen-iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("ground state has a negative interior value {value:e} at x = {x} (wrong eigenpair)")]
    NegativeGroundState { x: f64, value: f64 },

    #[error("only {survivors} of {paths} paths survived to T = {horizon}; need at least {required}")]
    SurvivorStarvation {
        survivors: usize,
        paths: usize,
        horizon: f64,
        required: usize,
    },

    #[error("sample {value} lies outside the binning range [{lower}, {upper}]")]
    OutOfRange { value: f64, lower: f64, upper: f64 },

    #[error("empty sample set")]
    EmptySample,

    #[error("histograms cover incompatible ranges [{a_lower}, {a_upper}] and [{b_lower}, {b_upper}]")]
    IncompatibleRanges {
        a_lower: f64,
        a_upper: f64,
        b_lower: f64,
        b_upper: f64,
    },

    #[error("map is not strictly monotone on the histogram range")]
    NotMonotone,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
