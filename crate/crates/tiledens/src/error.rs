use thiserror::Error;

/// Errors produced by the tiledens library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument was out of range or inconsistent with the grid.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// No usable observations remained after filtering.
    #[error("empty data: {0}")]
    EmptyData(String),

    /// A document or CSV input could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An operation produced a density with no mass to normalize.
    #[error("degenerate density: {0}")]
    Degenerate(String),

    /// An iterative solver hit its iteration cap before certifying optimality.
    #[error("solver did not converge: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
