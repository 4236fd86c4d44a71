//! Bayesian inference for partially linear models with Gaussian-process
//! nuisance priors, plus the simulation harness used to study coverage and
//! posterior normality.

pub mod data;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod lfd;
pub mod linalg;
pub mod priors;
pub mod samplers;
pub mod summaries;

pub use data::{Dataset, GroundTruth};
pub use error::{Error, Result};
pub use harness::{
    reproduce_table, run_experiment, ExperimentConfig, Model, PriorSetup, ReplicateReport, TableConfig,
};
pub use kernels::{GramMatrix, KernelConfig};
pub use lfd::{LfdEstimate, Link};
pub use priors::{BandwidthPrior, PriorConfig, PriorSpec, PriorStructure};
pub use samplers::{fit_gplm_logistic, fit_plm, McmcConfig, McmcTrace};
pub use summaries::{OracleQuantities, PosteriorSummary};
