use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("metric is not positive definite (smallest eigenvalue {min_eig:.3e})")]
    NonPositiveDefinite { min_eig: f64 },
    #[error("point lies on the excluded antipode of the stereographic chart")]
    ChartSingularity,
    #[error("finite-difference step underflow: {0}")]
    FiniteDifferenceStepUnderflow(String),
    #[error("Richardson extrapolation did not converge (disagreement {disagreement:.3e})")]
    NonConvergentDerivative { disagreement: f64 },
    #[error("ODE integrator failed: {0}")]
    IntegratorFailure(String),
    #[error("graph too large: sup|w| = {sup:.4} exceeds {limit:.4}")]
    GraphTooLarge { sup: f64, limit: f64 },
    #[error("input has kernel energy {energy:.3e} in degrees l <= 1")]
    KernelComponentPresent { energy: f64 },
    #[error("finite-difference noise dominates at step {ds:.3e}")]
    StepTooLarge { ds: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("least-squares fit is ill-conditioned: {0}")]
    FitIllConditioned(String),
    #[error("exponential map inversion failed (residual {residual:.3e})")]
    ExpInversionFailure { residual: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
