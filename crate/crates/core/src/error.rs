use thiserror::Error;

use crate::krylov::SolveReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singularity: {0}")]
    Singularity(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(
        "iterative solve did not converge after {} iterations (relative residual {:.3e})",
        .report.iterations, .report.final_relative_residual
    )]
    NonConvergence { report: SolveReport },
    #[error("evaluation point too close to the scatterer: {0}")]
    Proximity(String),
    #[error("invalid specification: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("missing background data: {0}")]
    MissingBackground(String),
    #[error("segmentation failed: {0}")]
    Segmentation(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
