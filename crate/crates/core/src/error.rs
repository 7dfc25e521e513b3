use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("empty operator")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("lambda = {lambda} is too close to the spectrum (condition estimate {cond:.3e})")]
    NearSingular { lambda: Complex64, cond: f64 },
    #[error("eigenvalue solver did not converge")]
    EigenFailure,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("contour quadrature did not converge: {0}")]
    QuadratureDivergence(String),
    #[error("integral diverges: spectral bound {0} is not negative")]
    DivergentTail(f64),
    #[error("t = {0} is outside the domain (0, T]")]
    DomainError(f64),
    #[error("empty grid")]
    EmptyGrid,
    #[error("step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepperStall { t: f64, h: f64 },
    #[error("kernel norm {norm:.3e} exceeds the envelope {envelope:.3e} at s = {s:.4e}")]
    KernelBlowup { s: f64, norm: f64, envelope: f64 },
    #[error("fixed-point iteration does not contract (factor {0:.3e})")]
    NoContraction(f64),
    #[error("mesh needs at least two points")]
    DegenerateMesh,
    #[error("evolution grid lacks block ({0}, {1})")]
    MissingBlock(usize, usize),
    #[error("point ({0}, {1}) is outside the sampled wedge")]
    InterpolationOutOfRange(f64, f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing artifacts: {0}")]
    MissingArtifacts(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("mode {mode}: {source}")]
    Mode { mode: i64, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
