use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("null state: all amplitudes are zero")]
    NullState,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("mode index error: {0}")]
    ModeIndex(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("truncation leak {leak:.3e} exceeds bound {bound:.3e}")]
    Truncation { leak: f64, bound: f64 },
    #[error("estimator undefined: {0}")]
    Undefined(String),
    #[error("series outside stability window at x = {x}; use the asymptotic branch")]
    SeriesWindow { x: f64 },
    #[error("witness requires block-product target ({0})")]
    NotBlockProduct(String),
    #[error("xi of batch and rule must match")]
    XiMismatch,
    #[error("bias series does not converge for (m={m}, n={n}, tau={tau})")]
    Convergence { m: usize, n: usize, tau: f64 },
    #[error("quadrature not converged: {coarse} vs {fine}")]
    NotConverged { coarse: f64, fine: f64 },
    #[error("no feasible plan; tightest achievable epsilon {best_epsilon:.4e}")]
    Infeasible { best_epsilon: f64 },
    #[error("rejection acceptance {rate:.2e} below floor; increase proposal variance")]
    LowAcceptance { rate: f64 },
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
