use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("FCIDUMP line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid FCIDUMP header: {0}")]
    Header(String),

    #[error("invalid integrals: {0}")]
    Integrals(String),

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("determinants belong to different sectors: ({0}, {1}) vs ({2}, {3})")]
    SectorMismatch(u32, u32, u32, u32),

    #[error("sector ({n_alpha}α, {n_beta}β) does not fit in {n_orb} orbitals")]
    InvalidSector {
        n_orb: usize,
        n_alpha: usize,
        n_beta: usize,
    },

    #[error("dimension {dim} exceeds the configured limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("complex coefficient on {string}: imaginary part {imag:e}")]
    ComplexCoefficient { string: String, imag: f64 },

    #[error("{total} shots cannot cover {terms} terms")]
    TooFewShots { total: u64, terms: usize },

    #[error("quadrature did not converge (estimated error {0:e})")]
    Quadrature(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
