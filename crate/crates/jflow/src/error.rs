//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed an out-of-contract argument (index range, shape, ...).
    #[error("argument error: {0}")]
    Argument(String),

    /// A geometric precondition failed (positivity, admissibility).
    #[error("geometry error: {what}{}{}",
        .min_eigenvalue.map(|v| format!(" (min eigenvalue {v:.6e})")).unwrap_or_default(),
        .point.map(|p| format!(" at grid point {p}")).unwrap_or_default())]
    Geometry {
        what: String,
        min_eigenvalue: Option<f64>,
        point: Option<usize>,
    },

    /// Adaptive stepping exhausted its halving budget. Carries the last
    /// admissible state so callers can inspect or persist it.
    #[error("stiffness error: dt halved {halvings} times without an admissible step at t = {t}")]
    Stiffness {
        halvings: u32,
        t: f64,
        last: Box<crate::flow::FlowState>,
    },

    /// Scenario calibration could not bracket its target.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// A generated scenario violated its own contract.
    #[error("scenario error: {0}")]
    Scenario(String),

    /// Iterative solver failed to converge. Carries the last iterate.
    #[error("nonconvergence: {what} (residual {residual:.6e})")]
    Nonconvergence {
        what: String,
        residual: f64,
        last: Box<crate::grid::ScalarField>,
    },

    /// An operation's stated precondition does not hold.
    #[error("precondition error: {0}")]
    Precondition(String),

    /// Config file problem, with line/field diagnostics when available.
    #[error("config error{}{}: {what}",
        .line.map(|l| format!(" at line {l}")).unwrap_or_default(),
        .field.as_ref().map(|f| format!(" (field `{f}`)")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        field: Option<String>,
        what: String,
    },

    /// Ledger or snapshot stream is malformed at a byte offset.
    #[error("format error at byte offset {byte_offset}: {what}")]
    Format { byte_offset: u64, what: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry {
            what: msg.into(),
            min_eigenvalue: None,
            point: None,
        }
    }

    pub fn geometry_at(msg: impl Into<String>, min_eigenvalue: f64, point: Option<usize>) -> Self {
        Error::Geometry {
            what: msg.into(),
            min_eigenvalue: Some(min_eigenvalue),
            point,
        }
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config {
            line: None,
            field: None,
            what: msg.into(),
        }
    }

    pub fn config_field(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            line: None,
            field: Some(field.into()),
            what: msg.into(),
        }
    }
}
