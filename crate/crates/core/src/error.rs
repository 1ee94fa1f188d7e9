use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the clustering pipeline.
///
/// Each variant belongs to one [`ErrorClass`], which the command-line front
/// end maps onto a process exit code.
#[derive(Debug, Error)]
pub enum CnsError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: file is empty")]
    EmptyFile { path: PathBuf },

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: u64,
        column: usize,
        message: String,
    },

    #[error("label column {0} not found")]
    MissingLabelColumn(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("every column has zero variance; nothing left to cluster")]
    AllColumnsConstant,

    #[error("k = {k} is out of range for n = {n} points (need 1 <= k <= n - 1)")]
    NeighbourCount { k: usize, n: usize },

    #[error("row {row} has zero norm; cosine distance is undefined")]
    ZeroNormRow { row: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("lambda = {0} must lie strictly inside (0, 1)")]
    LambdaOutOfRange(f64),

    #[error("resolvent solve for column {column} stopped after {iterations} iterations with residual {residual:e} (tolerance {tol:e})")]
    NoConvergence {
        column: usize,
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("duplicate informative index {0}")]
    DuplicateIndex(usize),

    #[error("index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("row {row} holds membership {value}, below the clamp window")]
    NegativeMass { row: usize, value: f64 },

    #[error("row {row} of the final assignment sums to {sum}; solver tolerance is too loose")]
    RowSum { row: usize, sum: f64 },

    #[error("requested K = {requested} but only {available} candidates are available")]
    TooFewCandidates { requested: usize, available: usize },

    #[error("reference value is degenerate (R = {0}); need k < n and lambda < 1")]
    DegenerateReference(f64),

    #[error("lambda grid is empty after discarding values >= 1; pass an explicit grid")]
    EmptyLambdaGrid,

    #[error("k grid is empty")]
    EmptyKGrid,

    #[error("no K values to try (need K_max >= 2 and at least 2 candidates)")]
    EmptyKRange,

    #[error("label vectors differ in length: {truth} vs {pred}")]
    LengthMismatch { truth: usize, pred: usize },
}

/// Coarse grouping of [`CnsError`] variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Parse,
    Data,
    Graph,
    Solver,
    Selection,
    Evaluation,
}

impl ErrorClass {
    /// Process exit code reported by the `cns` binary.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Io => 3,
            ErrorClass::Parse => 4,
            ErrorClass::Data => 5,
            ErrorClass::Graph => 6,
            ErrorClass::Solver => 7,
            ErrorClass::Selection => 8,
            ErrorClass::Evaluation => 9,
        }
    }
}

impl CnsError {
    pub fn class(&self) -> ErrorClass {
        use CnsError::*;
        match self {
            Io { .. } => ErrorClass::Io,
            EmptyFile { .. } | Parse { .. } | MissingLabelColumn(_) => ErrorClass::Parse,
            InvalidData(_) | AllColumnsConstant => ErrorClass::Data,
            NeighbourCount { .. } | ZeroNormRow { .. } | InvalidGraph(_) => ErrorClass::Graph,
            LambdaOutOfRange(_)
            | NoConvergence { .. }
            | DuplicateIndex(_)
            | IndexOutOfRange { .. }
            | NegativeMass { .. }
            | RowSum { .. } => ErrorClass::Solver,
            TooFewCandidates { .. }
            | DegenerateReference(_)
            | EmptyLambdaGrid
            | EmptyKGrid
            | EmptyKRange => ErrorClass::Selection,
            LengthMismatch { .. } => ErrorClass::Evaluation,
        }
    }
}

pub type Result<T> = std::result::Result<T, CnsError>;
