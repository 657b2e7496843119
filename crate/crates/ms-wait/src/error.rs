//! Error type shared across the crate.

use crate::stage_graph::StageId;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ---- stage graph construction / queries ----
    #[error("stage graph contains a cycle")]
    CycleDetected,
    #[error("stage {0} has more than one parent")]
    MultipleParents(StageId),
    #[error("graph has multiple roots (e.g. stages {0} and {1})")]
    MultipleRoots(StageId, StageId),
    #[error("stage {0} is not reachable from the root")]
    UnreachableStage(StageId),
    #[error("stage {0} listed more than once")]
    DuplicateStage(StageId),
    #[error("unknown stage {0}")]
    UnknownStage(StageId),
    #[error("no root-directed path from stage {from} to stage {to}")]
    NoPath { from: StageId, to: StageId },

    // ---- records / CSV ingestion ----
    #[error("malformed row{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    MalformedRow { line: Option<usize>, msg: String },
    #[error("subject {subject}: observed transition {from} -> {to} is not a graph edge")]
    EdgeViolation {
        subject: String,
        from: StageId,
        to: StageId,
    },
    #[error("subject {subject}: {msg}")]
    TimeOrderViolation { subject: String, msg: String },
    #[error("subject {subject}: stage {stage} visited more than once")]
    DuplicateStageVisit { subject: String, stage: StageId },
    #[error("duplicate subject id {0}")]
    DuplicateSubject(String),
    #[error("stage {0} was not visited by this record")]
    StageNotVisited(StageId),

    // ---- step functions / estimators ----
    #[error("risk set exhausted: positive event mass at t = {time} with zero at-risk mass")]
    RiskSetExhausted { time: f64 },
    #[error("jump times must be finite, nonnegative and strictly increasing")]
    InvalidJumpTimes,
    #[error("stage {dest} is not a child of stage {stage}")]
    UnknownDestination { stage: StageId, dest: StageId },
    #[error("empirical counting requires fully uncensored data (subject {0} is censored)")]
    CensoredDataInEmpiricalRegime(String),

    // ---- fractional observations ----
    #[error("no incidence curve supplied for edge {from} -> {to}")]
    MissingIncidenceCurve { from: StageId, to: StageId },

    // ---- simulation / benchmark ----
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("no censoring parameters for stage {0}")]
    MissingCensoringParams(StageId),
    #[error("truth curve has no mass; cannot place percentile grid")]
    DegenerateTruth,

    // ---- I/O ----
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for I/O problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 2,
            Error::Csv(e) if e.is_io_error() => 2,
            _ => 1,
        }
    }
}
