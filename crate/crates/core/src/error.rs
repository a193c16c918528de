use thiserror::Error;

use crate::grid::GridError;
use crate::krylov::KrylovError;
use crate::materials::MaterialError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Krylov(#[from] KrylovError),
    #[error("dense {what} failed: {detail}")]
    Dense { what: &'static str, detail: String },
    #[error("{what} needs a dense problem with {size} unknowns, above the limit of {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },
    #[error("{constraint} violated: relative residual {residual:.3e} above {tol:.1e}")]
    Constraint {
        constraint: &'static str,
        residual: f64,
        tol: f64,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
