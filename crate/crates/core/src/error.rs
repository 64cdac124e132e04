use std::fmt;

/// Errors raised by the numerical routines and file readers of this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("InvalidParameter: {name} {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("NoPeaks: spectrum has no local maximum above the noise floor")]
    NoPeaks,

    #[error("NoRoot: no sign change of the terminal residual in C on [{lo}, {hi}] (t1={t1})")]
    NoRoot { lo: f64, hi: f64, t1: f64 },

    #[error("NoConvergence: {what} did not converge after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("Singularity: |E|={e:e} below guard at t={t}")]
    Singularity { t: f64, e: f64 },

    #[error("NonFinite: derivative evaluated to a non-finite value at t={t}")]
    NonFinite { t: f64 },

    #[error("Domain: t={t} outside control horizon [{t0}, {t1}]")]
    Domain { t: f64, t0: f64, t1: f64 },

    #[error("MissingDueDate: job {id} has no due time")]
    MissingDueDate { id: String },

    #[error("TooLarge: {n} jobs exceeds the limit of {max} for {method}")]
    TooLarge {
        n: usize,
        max: usize,
        method: &'static str,
    },

    #[error("Format: {0}")]
    Format(String),

    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Numeric,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter { .. }
            | Error::TooLarge { .. }
            | Error::MissingDueDate { .. } => ErrorClass::Usage,
            Error::NoPeaks
            | Error::NoRoot { .. }
            | Error::NoConvergence { .. }
            | Error::Singularity { .. }
            | Error::NonFinite { .. }
            | Error::Domain { .. } => ErrorClass::Numeric,
            Error::Format(_) | Error::Io(_) => ErrorClass::Io,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl fmt::Display) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.to_string(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
