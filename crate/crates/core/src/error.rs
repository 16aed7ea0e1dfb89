use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("SingularForm: |det| = {det:.3e} is below the nondegeneracy threshold {threshold:.3e}")]
    SingularForm { det: f64, threshold: f64 },

    #[error("NotHermitian: max |F - F^H| = {deviation:.3e} exceeds tolerance {tolerance:.3e}")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("NonFinite: {0} contains NaN or infinite entries")]
    NonFinite(&'static str),

    #[error("DimensionMismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("DegenerateKinetic: {0}")]
    DegenerateKinetic(String),

    #[error("ZeroBeta: the second-order model needs a nonzero acceleration coupling")]
    ZeroBeta,

    #[error("ZeroAlpha2: alpha2 = 0, use the modified first-order system instead")]
    ZeroAlpha2,

    #[error("ZeroAlpha1: the first-order coupling alpha1 must be nonzero")]
    ZeroAlpha1,

    #[error("NotPositiveDefinite: a canonical chart needs a definite form of the sign of alpha")]
    NotPositiveDefinite,

    #[error("SingularTransform: the transformation matrix is not invertible")]
    SingularTransform,

    #[error("SingularOperator: the kinetic operator is singular on Hermitian matrices")]
    SingularOperator,

    #[error("NotGHermitian: the generator violates G-hermiticity by {deviation:.3e}")]
    NotGHermitian { deviation: f64 },

    #[error("WrongSymmetryClass: the generator is neither Hermitian nor antihermitian")]
    WrongSymmetryClass,

    #[error("InvalidInput: {0}")]
    InvalidInput(String),

    #[error("StepFailure at t = {t}: {source}")]
    StepFailure {
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
