use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("units: unknown unit tag `{0}`")]
    UnknownUnit(String),

    #[error("potential: {0}")]
    Potential(String),

    #[error("potential: gap {target_ev} eV not bracketed by depth scale in [{lo}, {hi}] (gaps {gap_lo_ev} .. {gap_hi_ev} eV)")]
    GapNotBracketed {
        target_ev: f64,
        lo: f64,
        hi: f64,
        gap_lo_ev: f64,
        gap_hi_ev: f64,
    },

    #[error("bloch: eigensolver failed at k = {k}")]
    Eigensolver { k: f64 },

    #[error("bloch: {0}")]
    Bloch(String),

    #[error("propagate: norm drift {drift:e} at t = {t} (k0 = {k0}); step too large")]
    NormDrift { drift: f64, t: f64, k0: f64 },

    #[error("gauge: no overlap block for k-index {k_index} with shift {shift}")]
    MissingOverlap { k_index: usize, shift: i64 },

    #[error("observables: {0}")]
    Observables(String),

    #[error("config: {0}")]
    Config(String),

    #[error("config: field `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
