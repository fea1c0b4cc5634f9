use thiserror::Error;

/// Crate-wide error type. Variants map one-to-one onto the failure modes of
/// the public operations; none of them carry recoverable state.
#[derive(Debug, Error)]
pub enum Error {
    /// tau is too close to a zero of tau^8 - 14 tau^4 + 1, where the square
    /// root in the representation functions degenerates.
    #[error("tau = {tau} is within {eps:e} of a branch point")]
    BranchPoint { tau: num_complex::Complex64, eps: f64 },

    /// The p/q frame spans no area, so the unit normal is undefined.
    #[error("degenerate frame: A1 = {a1:e} is not positive")]
    DegenerateFrame { a1: f64 },

    /// A maximization domain reaches a branch point of the representation.
    #[error("domain contains a branch point within margin {margin:e}")]
    DomainContainsBranchPoint { margin: f64 },

    #[error("index out of range: {what}")]
    IndexOutOfRange { what: String },

    /// Constraint stencils reach three rows into the net; below n = 7 some
    /// summation ranges would be empty or negative.
    #[error("unsupported grid size n = {n}; constraint stencils require n >= 7")]
    UnsupportedGridSize { n: usize },

    #[error("invalid dimensions: {what}")]
    InvalidDimensions { what: String },

    /// Collocation requires exactly as many parameter sites as basis
    /// functions so that B is square and invertible.
    #[error("non-square system: {params} parameter sites for {basis} basis functions")]
    NonSquareSystem { params: usize, basis: usize },

    #[error("singular linear system")]
    SingularSystem,

    #[error("parameter out of range: {what}")]
    ParamOutOfRange { what: String },

    #[error("dimension mismatch: {what}")]
    DimensionMismatch { what: String },

    #[error("power iteration did not settle after {restarts} restarts")]
    NoConvergence { restarts: usize },

    #[error("missing sample at (i, j) = ({i}, {j})")]
    MissingSample { i: usize, j: usize },

    #[error("parse error at line {line}: {what}")]
    ParseError { line: usize, what: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
