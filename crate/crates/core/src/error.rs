//! Error type shared by all modules of the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("label list must be nonempty")]
    EmptyLabels,

    #[error("duplicate spectrum label `{0}`")]
    DuplicateLabel(String),

    #[error("elements belong to different parent structures")]
    ParentMismatch,

    #[error("algebras do not match: expected {expected}, found {found}")]
    AlgebraMismatch { expected: String, found: String },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("improper ideal: quotient by the whole algebra is not unital")]
    ImproperIdeal,

    #[error("metric at {context} is not Hermitian (residual {residual:.3e})")]
    MetricNotHermitian { context: String, residual: f64 },

    #[error("metric at {context} is not positive definite (smallest eigenvalue {eigenvalue:.3e})")]
    MetricNotPositive { context: String, eigenvalue: f64 },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("module is not full on the {side} side; empty fibers at points {points:?}")]
    NotFull { side: &'static str, points: Vec<usize> },

    #[error("not an imprimitivity bimodule: {reason}")]
    NotImprimitivity { reason: String },

    #[error("generator {index} is not normal (residual {residual:.3e})")]
    NonNormalGenerator { index: usize, residual: f64 },

    #[error("generators {i} and {j} do not commute (commutator norm {residual:.3e})")]
    NonCommutingGenerators { i: usize, j: usize, residual: f64 },

    #[error("ill-conditioned joint spectrum: {0}")]
    AmbiguousSpectrum(String),

    #[error("element lies outside the algebra generated by the data (off-block mass {residual:.3e})")]
    OutsideAlgebra { residual: f64 },

    #[error("map is not invertible")]
    NotInvertible,

    #[error("idempotent families do not commute (residual {residual:.3e})")]
    NonCommutingIdempotents { residual: f64 },

    #[error("gram form degenerate on fiber ({a},{b})")]
    DegenerateGram { a: usize, b: usize },

    #[error("invalid projection family: {0}")]
    InvalidProjections(String),

    #[error("category is not full: witness triple {witness:?}")]
    NotFullCategory { witness: (String, String, String) },

    #[error("category is not commutative: diagonal block {0} is non-commutative")]
    NotCommutativeCategory(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}
