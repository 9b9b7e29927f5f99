use thiserror::Error;

use crate::randfield::SeedId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({x}, {y}) lies outside the unit square")]
    OutsideDomain { x: f64, y: f64 },

    #[error("meshes are not nested (coarse n = {coarse}, fine n = {fine})")]
    NotNested { coarse: usize, fine: usize },

    #[error("field realization belongs to a mesh with n = {field}, expected n = {mesh}")]
    FieldMismatch { field: usize, mesh: usize },

    #[error("conjugate gradients stopped after {iterations} iterations with relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("eigen-solve produced only {found} positive eigenvalues, {requested} requested")]
    TooFewModes { requested: usize, found: usize },

    #[error("particle track did not exit the domain ({0})")]
    TrackIncomplete(&'static str),

    #[error("sample {seed} failed: {source}")]
    Sample {
        seed: SeedId,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
