use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("parse error in {context} at line {line}, column {column}: {message}")]
    Parse {
        context: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid {field}: {reason}")]
    Invariant { field: String, reason: String },

    #[error("duplicate actor id {0:?}")]
    DuplicateActor(String),

    #[error("no ego state at time index {0}")]
    MissingEgoState(i64),

    #[error("time index {t} outside track span [{first}, {last}]")]
    OutsideTrack { t: f64, first: i64, last: i64 },

    #[error("degenerate reference path: {0}")]
    DegeneratePath(String),

    #[error("frenet singularity at s = {s:.3}: lateral offset {d:.3} exceeds local radius of curvature")]
    FrenetSingularity { s: f64, d: f64 },

    #[error("arc length {s:.6} outside reference path [0, {length:.6}]")]
    ArcLengthOutOfRange { s: f64, length: f64 },

    #[error("reachability results are not comparable: {0}")]
    MismatchedGoals(String),

    #[error("unknown actor id {0:?}")]
    UnknownActor(String),

    #[error("point ({x:.3}, {y:.3}) outside the BEV view")]
    OutOfView { x: f64, y: f64 },

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("dataset error in {path}: {reason}")]
    Dataset { path: PathBuf, reason: String },

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("invalid policy output: {0}")]
    InvalidAction(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invariant(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invariant {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }

    pub(crate) fn from_json(context: impl Into<String>, err: &serde_json::Error) -> Self {
        Error::Parse {
            context: context.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
