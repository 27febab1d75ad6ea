use thiserror::Error;

use crate::data::GroupId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Validation,
    Estimation,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: column `{column}`: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("missing required column `{0}` in header")]
    MissingColumn(String),

    #[error("line {line}: treatment w={w} contradicts sharp assignment 1(x >= {cutoff}) for group `{group}` at x={x}")]
    AssignmentViolation {
        line: usize,
        group: String,
        x: f64,
        w: u8,
        cutoff: f64,
    },

    #[error("unknown group `{label}`{}", .line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    UnknownGroup { label: String, line: Option<usize> },

    #[error("groups `{first}` and `{second}` share baseline cutoff {cutoff}; merge tied groups upstream before learning")]
    TiedCutoffs {
        first: String,
        second: String,
        cutoff: f64,
    },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("group `{group}` has {count} records, need at least {needed}")]
    TooFewRecords {
        group: String,
        count: usize,
        needed: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("local fit at x={query} is rank deficient after widening bandwidth to {bandwidth}")]
    RankDeficient { query: f64, bandwidth: f64 },

    #[error("all running-variable values are identical; bandwidth undefined")]
    DegenerateSpread,

    #[error("no {side} outcome curve for group {group} in fold {fold}")]
    MissingCurve {
        group: GroupId,
        side: &'static str,
        fold: usize,
    },

    #[error("cannot estimate difference pair (w={w}, g={g}, g'={g_ref}): {reason}")]
    MissingPair {
        w: u8,
        g: GroupId,
        g_ref: GroupId,
        reason: String,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config document: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. }
            | Error::MissingColumn(_)
            | Error::AssignmentViolation { .. }
            | Error::UnknownGroup { .. }
            | Error::TiedCutoffs { .. }
            | Error::InvalidDesign(_)
            | Error::InvalidPolicy(_)
            | Error::TooFewRecords { .. }
            | Error::Csv(_) => ErrorKind::Validation,
            Error::InvalidConfig(_) | Error::Toml(_) => ErrorKind::Usage,
            Error::InsufficientData(_)
            | Error::RankDeficient { .. }
            | Error::DegenerateSpread
            | Error::MissingCurve { .. }
            | Error::MissingPair { .. } => ErrorKind::Estimation,
            Error::Stage { source, .. } => source.kind(),
            Error::Io(_) | Error::Json(_) => ErrorKind::Io,
        }
    }

    /// Wraps the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

pub(crate) trait ResultExt<T> {
    fn stage(self, stage: impl FnOnce() -> String) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn stage(self, stage: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| e.in_stage(stage()))
    }
}
