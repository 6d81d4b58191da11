use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("patch `{0}` captures no boundary facet (mesh too coarse or patch off the boundary)")]
    EmptyPatch(String),

    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("system is singular or resonant at omega = {omega} rad/s (condition estimate {condition:e})")]
    Resonance { omega: f64, condition: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("region is not aligned with the element grid: {0}")]
    Alignment(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("all eigenvalue counts are equal ({0}); supply the threshold explicitly")]
    NoGap(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("coverage: {0}")]
    Coverage(String),

    #[error("containment: {0}")]
    Containment(String),

    #[error("overlap: {0}")]
    Overlap(String),

    #[error("sampling: {0}")]
    Sampling(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema: {0}")]
    Schema(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
