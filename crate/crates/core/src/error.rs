use thiserror::Error;

use crate::steadystate::SteadyState;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error(
        "steady-state solver did not converge after {iterations} iterations \
         (relative residual {residual:.3e}, continuation parameter {progress:.6})"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        progress: f64,
        last: Box<SteadyState>,
    },

    #[error(
        "singular Jacobian at continuation parameter {progress:.6}; \
         try finer continuation steps"
    )]
    JacobianSingular { progress: f64 },

    #[error("drift matrix is not stable (spectral abscissa {spectral_abscissa:.6e}); no steady covariance exists")]
    UnstableDrift { spectral_abscissa: f64 },

    #[error("Lyapunov system is numerically singular")]
    SolveSingular,

    #[error("eigenvalue computation failed for matrix:\n{0}")]
    Eigen(String),

    #[error("non-physical covariance: {0}")]
    InvalidState(String),

    #[error("time step {dt:.3e} exceeds the stability bound {bound:.3e}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("integration needs {required:.3e} trajectory-steps, budget is {budget:.3e}")]
    BudgetExceeded { required: f64, budget: f64 },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
