use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("{what}: expected length {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: expected {expected} feature values, found {found}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: non-finite value in column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("row {row}: all-zero feature vector")]
    ZeroRow { row: usize },
    #[error("row {row}: duplicate id {id}")]
    DuplicateId { row: usize, id: u64 },
    #[error("row {row}: label {label} out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: u32, classes: u32 },
    #[error("row {row}: reference loss must be finite and nonnegative")]
    InvalidLoss { row: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("split too small for stratification ({detail}); starved classes: {classes:?}")]
    SplitTooSmall { classes: Vec<u32>, detail: String },
    #[error("batch size {batch_size} is invalid for {n} samples")]
    InvalidBatchSize { batch_size: usize, n: usize },
    #[error("infeasible schedule constraints: {0}")]
    Infeasible(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("batch has {0} points, spectral scoring needs at least 2")]
    BatchTooSmall(usize),
    #[error("inverse_ref_loss weighting requires reference losses")]
    MissingRefLosses,
    #[error("cannot draw {k} points from a remainder of {available}")]
    SampleTooLarge { k: usize, available: usize },
    #[error("schedule exhausted at step {step} (length {len})")]
    ScheduleExhausted { step: usize, len: usize },
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("training split contains a single class")]
    SingleClass,
}

pub type Result<T> = core::result::Result<T, Error>;
