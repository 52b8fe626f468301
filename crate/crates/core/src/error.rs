use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("covariance of the kept block is singular (condition number {cond:.3e})")]
    SingularCovariance { cond: f64 },

    #[error("need N > d_K + 2 samples for a corrected inverse, got N = {n}, d_K = {d_kept}")]
    InsufficientSamples { n: usize, d_kept: usize },

    #[error("signal-to-noise cut keeps no data (first point below threshold {snr_min})")]
    EmptyKeep { snr_min: f64 },

    #[error("fit did not converge after {iterations} iterations (gradient max-norm {grad_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        best: Option<Box<crate::fitter::FitResult>>,
    },

    #[error("Hessian of the augmented chi-squared is not positive definite at the optimum")]
    SingularHessian,

    #[error("derivative tensors are required for {0}")]
    MissingTensors(&'static str),

    #[error("per-sample derivative tensors are required for PPIC")]
    MissingSamples,

    #[error("importance sampling degenerate: effective sample size {ess:.1} < {min}")]
    DegenerateWeights { ess: f64, min: f64 },

    #[error("posterior-predictive ratio for sample {sample} is not positive ({value:e})")]
    NonPositiveRatio { sample: usize, value: f64 },

    #[error("no candidate has a finite information criterion")]
    AllInvalid,

    #[error("covariance factorization failed: {0}")]
    FactorizationFailure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
