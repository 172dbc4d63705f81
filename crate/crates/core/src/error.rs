use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed field `{field}` ({value:?}): {reason}")]
    Malformed {
        line: usize,
        field: String,
        value: String,
        reason: String,
    },

    #[error("line {line}: self-loop on member {member}")]
    SelfLoop { line: usize, member: u64 },

    #[error("line {line}: negative message count {value}")]
    NegativeMessage { line: usize, value: String },

    #[error("member {member} has inconsistent treatment flags across records")]
    InconsistentTreatment { member: u64 },

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("supplied {group} size {supplied} is smaller than the {observed} distinct {group} members observed in the edges")]
    GroupSizeTooSmall {
        group: &'static str,
        supplied: u64,
        observed: u64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),

    #[error("need at least two treated and two control members, got {treated} treated and {control} control")]
    InsufficientGroups { treated: u64, control: u64 },

    #[error("class {0} has zero ordered pairs")]
    EmptyClass(&'static str),

    #[error("{0} is undefined for these totals")]
    Undefined(&'static str),

    #[error(
        "statistic `{statistic}` undefined on {undefined} of {iterations} permutation iterations"
    )]
    DegenerateNull {
        statistic: String,
        undefined: usize,
        iterations: usize,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("write failed: {0}")]
    Write(#[source] std::io::Error),
}

impl Error {
    /// Process exit code: 2 for bad input or configuration, 3 for
    /// statistically degenerate data.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::InsufficientGroups { .. }
            | Error::EmptyClass(_)
            | Error::Undefined(_)
            | Error::DegenerateNull { .. } => 3,
            _ => 2,
        }
    }
}
