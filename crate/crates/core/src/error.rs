//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spatial dimension must be 1, 2, or 3 (got {0})")]
    InvalidDimension(usize),
    #[error("resolution must be at least 2 cells per axis (got {0})")]
    InvalidResolution(usize),
    #[error("side length must be positive (axis {axis}: {value})")]
    NonPositiveLength { axis: usize, value: f64 },
    #[error("expected {expected} side lengths, got {got}")]
    LengthCountMismatch { expected: usize, got: usize },
    #[error("degree {degree} out of range for dimension {dim}")]
    DegreeOutOfRange { degree: usize, dim: usize },
    #[error("cochain degrees differ: {0} vs {1}")]
    DegreeMismatch(usize, usize),
    #[error("cochains live on different complexes")]
    ComplexMismatch,
    #[error("value count {got} does not match cell count {expected}")]
    ValueCountMismatch { expected: usize, got: usize },
    #[error("Hodge weight must be positive (degree {degree}, cell {cell}: {value})")]
    NonPositiveWeight {
        degree: usize,
        cell: usize,
        value: f64,
    },
    #[error("eigensolver failed at degree {degree} (size {size})")]
    EigenFailure { degree: usize, size: usize },
    #[error(
        "elliptic solve missed its tolerance (degree {degree}, residual {residual:.3e} > {tolerance:.3e})"
    )]
    SolverFailure {
        degree: usize,
        residual: f64,
        tolerance: f64,
    },
    #[error(
        "datum is not co-exact (exact part {exact:.3e}, harmonic part {harmonic:.3e}, tolerance {tolerance:.3e})"
    )]
    NotCoexact {
        exact: f64,
        harmonic: f64,
        tolerance: f64,
    },
    #[error(
        "datum is not exact (coexact part {coexact:.3e}, harmonic part {harmonic:.3e}, tolerance {tolerance:.3e}); \
         closed data with harmonic content has no potential on the torus"
    )]
    NotExact {
        coexact: f64,
        harmonic: f64,
        tolerance: f64,
    },
    #[error("time step {dt} violates the CFL bound: dt*sqrt(lambda_max) = {product:.3} > {limit}")]
    CflViolation { dt: f64, product: f64, limit: f64 },
    #[error("slice index {k} out of range 0..={max}")]
    SliceOutOfRange { k: usize, max: usize },
    #[error("support window [{k0}, {k1}] must leave at least one clear slice at the {side} time boundary")]
    WindowTouchesBoundary { k0: usize, k1: usize, side: &'static str },
    #[error("current is not co-closed (residual {residual:.3e} > {tolerance:.3e})")]
    NotCoClosed { residual: f64, tolerance: f64 },
    #[error("current values do not vanish outside the declared support window [{k0}, {k1}]")]
    SupportOutsideWindow { k0: usize, k1: usize },
    #[error("Cauchy data violates the Lorenz conditions: {0}")]
    NotLorenz(String),
    #[error("form is not a Maxwell solution (residual {residual:.3e} > {tolerance:.3e})")]
    NotASolution { residual: f64, tolerance: f64 },
    #[error("zero-frequency (harmonic) mode {index} cannot enter the oscillator construction")]
    HarmonicMode { index: usize },
    #[error("mode leakage {leakage:.3e} exceeds {tolerance:.3e}; dominant out-of-basis modes: {modes:?}")]
    ModeLeakage {
        leakage: f64,
        tolerance: f64,
        modes: Vec<usize>,
    },
    #[error("amplitude {norm:.3e} exceeds the occupation-leakage guard {guard}")]
    AmplitudeGuard { norm: f64, guard: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
