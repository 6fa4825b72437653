use std::path::PathBuf;

/// Errors produced anywhere in the discretization pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("non-finite level-set value {value} at {location}")]
    Evaluation { location: String, value: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("point {0} lies outside the mesh")]
    OutOfDomain(String),
    #[error("non-finite entry assembled on element {element}")]
    Assembly { element: usize },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
