use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// `1 - gamma_{n+1} q_n` went negative, which would let `v` leave the nonnegative orthant.
    #[error("step guard violated at n = {n}: 1 - gamma_(n+1) * q_n = {value}")]
    StepGuard { n: usize, value: f64 },

    #[error("noise model `{0}` has no closed-form second moment")]
    UnsupportedNoise(String),

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("matrix is not Hurwitz (margin {0})")]
    NotHurwitz(f64),

    #[error("singular linear system")]
    Singular,

    #[error("solution blew up at t = {t}: norm {norm:e}")]
    BlowUp { t: f64, norm: f64 },

    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),

    #[error("stepsize constraint violated: {0}")]
    StepsizeConstraint(String),

    #[error("degenerate denominator in covariance closed form at ({k}, {l}): {value}")]
    DegenerateDenominator { k: usize, l: usize, value: f64 },

    #[error("problem `{0}` does not provide a Hessian")]
    MissingHessian(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}
