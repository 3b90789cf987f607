use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid line spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("invalid sample record: {0}")]
    InvalidRecord(String),

    #[error("noise variance must be non-negative, got {0}")]
    NegativeNoiseVariance(f64),

    #[error("index list is empty")]
    EmptyIndices,

    #[error("cannot place {k} frequencies with minimum separation {min_separation}")]
    InfeasibleSpectrum { k: usize, min_separation: f64 },

    #[error("invalid coprime scheme: {0}")]
    InvalidScheme(String),

    #[error("no window length M >= 2 is valid for N = {n}, L = {l}")]
    NoValidWindow { n: usize, l: usize },

    #[error("insufficient samples: need {needed}, have {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("window {window} repeats offset {offset} modulo N (duplicate sensing rows)")]
    DuplicateRows { window: usize, offset: u64 },

    #[error("sensing matrix is already column-normalized")]
    AlreadyNormalized,

    #[error("sparsity k = {k} exceeds the {rows} rows of the sensing matrix")]
    SparsityTooLarge { k: usize, rows: usize },

    #[error("numerical breakdown at iteration {iteration}, task {task}: {detail}")]
    NumericalBreakdown {
        iteration: usize,
        task: usize,
        detail: String,
    },

    #[error("frequency count mismatch: {truth} true vs {estimated} estimated")]
    CountMismatch { truth: usize, estimated: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
