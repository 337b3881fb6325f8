use std::path::PathBuf;

use thiserror::Error;

use crate::pgm::PgmError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("lattice size mismatch: expected side {expected}, found {found}")]
    LatticeMismatch { expected: usize, found: usize },

    #[error("non-finite value {value} at site index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("noise distribution has an atom of mass {mass} at zero; the uncertainty bound needs a CDF continuous at zero")]
    AtomAtZero { mass: f64 },

    #[error("noise family `{family}` has no density")]
    NoDensity { family: String },

    #[error("image of {width}x{height} pixels cannot supply a {side}x{side} lattice")]
    ImageTooSmall { width: usize, height: usize, side: usize },

    #[error(transparent)]
    Pgm(#[from] PgmError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::LatticeMismatch { .. } => "lattice_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::AtomAtZero { .. } => "atom_at_zero",
            Error::NoDensity { .. } => "no_density",
            Error::ImageTooSmall { .. } => "image_too_small",
            Error::Pgm(_) => "pgm",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Config(_) => "config",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
