use std::path::PathBuf;

use thiserror::Error;

use crate::rules::RuleSpec;
use crate::symbolic::{LayoutKind, PatternId};

/// A violated structural invariant of a symbolic value.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("occupancy has no filled slot")]
    EmptyOccupancy,
    #[error("{field} level {value} out of range")]
    OutOfRange { field: &'static str, value: u8 },
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("layout {kind:?} has no region {region}")]
    UnknownRegion { kind: LayoutKind, region: u8 },
    #[error("occupancy {0:#b} addresses slots outside the layout")]
    OccupancyOutOfLayout(u16),
    #[error("slot index {slot} invalid for a layout with {slots} slots")]
    SlotOutOfRange { slot: u8, slots: usize },
    #[error("two entities share slot {0}")]
    DuplicateSlot(u8),
    #[error("number {number} does not equal occupancy popcount {occupancy}")]
    NumberMismatch { number: usize, occupancy: usize },
    #[error("expected {expected} components, found {found}")]
    ComponentCount { expected: usize, found: usize },
    #[error("pattern {pattern} cannot hold a {kind:?} component")]
    LayoutMismatch { pattern: PatternId, kind: LayoutKind },
    #[error("illegal rule: {0}")]
    IllegalRule(String),
    #[error("component {component} attribute {attribute} governed {count} times")]
    BundleCoverage { component: usize, attribute: &'static str, count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("missing AVRSYM1 header")]
    BadHeader,
    #[error("input truncated")]
    Truncated,
    #[error("{0} trailing bytes after panel")]
    TrailingBytes(usize),
    #[error("invalid {field} code {value}")]
    BadCode { field: &'static str, value: u8 },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerationError {
    #[error("no feasible base for {spec} on component {component} after {attempts} attempts")]
    Infeasible { spec: RuleSpec, component: usize, attempts: usize },
    #[error("could not build {needed} distinct distractors")]
    Distractors { needed: usize },
    #[error("{pattern} puzzle #{index}: no uniquely solvable puzzle after {attempts} bundle resamples")]
    NotUnique { pattern: PatternId, index: u64, attempts: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("no rule bundle is consistent with the context rows (malformed puzzle)")]
    NoHypothesis,
    #[error("expected {expected} context panels, found {found}")]
    ContextSize { expected: usize, found: usize },
}

/// Crate-wide error for operations that touch files or configs.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("png: {0}")]
    Png(String),
    #[error("{0}")]
    Contract(String),
    #[error("qa answers disagree with the record: {}", .ids.join(", "))]
    QaMismatch { ids: Vec<String> },
    #[error("{} puzzle ids appear in the test digest: {}", .ids.len(), .ids.join(", "))]
    TestLeak { ids: Vec<String> },
    #[error("{} transcripts reference unknown puzzle ids: {}", .ids.len(), .ids.join(", "))]
    UnknownIds { ids: Vec<String> },
    #[error("duplicate transcript ids: {}", .ids.join(", "))]
    DuplicateIds { ids: Vec<String> },
    #[error("{} key entries have no transcript: {}", .ids.len(), .ids.join(", "))]
    MissingTranscripts { ids: Vec<String> },
    #[error("no transcripts to score")]
    EmptyTranscripts,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Decode(_) => "decode",
            Error::Generation(_) => "generation",
            Error::Solver(_) => "solver",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Config(_) => "config",
            Error::Png(_) => "png",
            Error::Contract(_) => "contract",
            Error::QaMismatch { .. } => "qa_mismatch",
            Error::TestLeak { .. } => "test_leak",
            Error::UnknownIds { .. } => "unknown_ids",
            Error::DuplicateIds { .. } => "duplicate_ids",
            Error::MissingTranscripts { .. } => "missing_transcripts",
            Error::EmptyTranscripts => "empty_transcripts",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
