//! Bayesian model averaging for correlated least-squares regression.
//!
//! The crate fits families of candidate models (and data-subset variants of
//! each), scores every candidate with an information criterion, and combines
//! the per-candidate estimates into a model average whose error budget
//! includes the spread between models.
//!
//! Pipeline, bottom up:
//!
//! - [`data`]: sample matrices, mean/covariance statistics with the
//!   Hartlap-corrected inverse, signal-to-noise cuts and kept/cut partitions.
//! - [`models`]: polynomial and multi-exponential model families with
//!   analytic derivatives up to third order and Gaussian parameter priors.
//! - [`fitter`]: posterior-mode fit of the augmented chi-squared and the
//!   derivative tensors needed by the criteria.
//! - [`criteria`]: BAIC, BPIC, PPIC, PAIC and ABIC_CV, including the
//!   data-subset penalties and optimal truncation of the Laplace expansion.
//! - [`averaging`]: model weights and averaged estimates.
//! - [`oracle`]: importance-sampling evaluation of the posterior integrals
//!   that the criteria approximate.
//! - [`synth`]: seeded synthetic data generators.
//! - [`pipeline`]: candidate sweeps and full model-averaging runs.
//!
//! With the default `parallel` feature, candidate sweeps, Monte-Carlo draws and
//! synthetic sample generation run on the rayon pool. Without it every loop runs
//! sequentially; results are identical either way.

pub mod averaging;
pub mod criteria;
pub mod data;
pub mod error;
pub mod fitter;
pub mod linalg;
pub mod models;
pub mod oracle;
pub mod par;
pub mod pipeline;
pub mod synth;

pub use averaging::{model_average, weights_from_ics, AveragedEstimate, WeightTable};
pub use criteria::{ICKind, ICReport};
pub use data::{compute_stats, snr_cut, DataSet, SampleStats, SubsetPartition};
pub use error::{Error, Result};
pub use fitter::{fit, ChiSqContext, DerivTensors, FitOptions, FitResult};
pub use models::{Family, GaussianPrior, ModelFunction, ModelSpec};
pub use oracle::MCConfig;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
