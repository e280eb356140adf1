use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("basis columns are not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("invalid projector: {0}")]
    InvalidProjector(String),
    #[error("rank mismatch: {0} vs {1}")]
    RankMismatch(usize, usize),
    #[error("invalid rank: {0}")]
    InvalidRank(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("weights must be finite and positive, got {0}")]
    InvalidWeight(f64),
    #[error(
        "Newton step is singular (block spectra separated by {separation:e}); fall back to a gradient step"
    )]
    SingularNewton { separation: f64 },
    #[error("eigenvalue gap at rank {0} is zero")]
    ZeroGap(usize),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("all {0} observation pairs are degenerate (constant dataset)")]
    DegeneratePairs(usize),
    #[error("baseline projection of test row {row} is zero")]
    DegenerateBaseline { row: usize },
    #[error("bilinear variance is zero for the chosen u, v")]
    DegenerateVariance,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot take log of non-positive mean error {value} at x = {x}")]
    NonPositiveError { x: f64, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
