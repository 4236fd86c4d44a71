//! MCMC samplers for the Gaussian partially linear model and the partially
//! linear logistic model.

mod bandwidth;
mod logistic;
mod plm;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bandwidth::BandwidthWalk;
pub use logistic::{elliptical_slice_step, fit_gplm_logistic};
pub use plm::{conjugate_theta_posterior, fit_plm};

/// Default spacing of the log inverse-bandwidth lattice.
pub const DEFAULT_LOG_A_STEP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Random-walk standard deviation for proposals on log a.
    pub rw_sd_log_a: f64,
    pub seed: u64,
    /// Spacing of the lattice log a moves on; 0 means a continuous walk.
    #[serde(default = "default_log_a_step")]
    pub log_a_step: f64,
    /// Starting θ; zero when absent.
    #[serde(default)]
    pub init_theta: Option<Vec<f64>>,
}

fn default_log_a_step() -> f64 {
    DEFAULT_LOG_A_STEP
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 5_000,
            rw_sd_log_a: 0.3,
            seed: 0,
            log_a_step: DEFAULT_LOG_A_STEP,
            init_theta: None,
        }
    }
}

impl McmcConfig {
    pub fn new(iterations: usize, burn_in: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            iterations,
            burn_in,
            seed,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::invalid(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if !(self.rw_sd_log_a > 0.0) || !self.rw_sd_log_a.is_finite() {
            return Err(Error::invalid("rw_sd_log_a must be positive"));
        }
        if !(self.log_a_step >= 0.0) || !self.log_a_step.is_finite() {
            return Err(Error::invalid("log_a_step must be non-negative"));
        }
        Ok(())
    }

    pub fn kept(&self) -> usize {
        self.iterations - self.burn_in
    }

    pub(crate) fn initial_theta(&self, p: usize) -> Result<DVector<f64>> {
        match &self.init_theta {
            None => Ok(DVector::zeros(p)),
            Some(t) if t.len() == p => Ok(DVector::from_column_slice(t)),
            Some(t) => Err(Error::invalid(format!(
                "init_theta has {} coordinates, expected {p}",
                t.len()
            ))),
        }
    }
}

/// Post-burn-in draws, one row per kept iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcTrace {
    /// kept × p
    pub theta: DMatrix<f64>,
    /// kept × n, η at the design points.
    pub eta_at_design: DMatrix<f64>,
    pub a: DVector<f64>,
    pub accept_rate_a: f64,
    /// Acceptance of θ proposals after burn-in (Metropolis samplers only).
    #[serde(default)]
    pub accept_rate_theta: Option<f64>,
    /// Noise sd draws when σ is sampled.
    #[serde(default)]
    pub noise_sd: Option<DVector<f64>>,
}

/// Number of η design values written per row by [`McmcTrace::write_csv`].
pub const CSV_ETA_COLUMNS: usize = 10;

impl McmcTrace {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn p(&self) -> usize {
        self.theta.ncols()
    }

    /// Number of design points, i.e. the sample size the trace was fit on.
    pub fn n(&self) -> usize {
        self.eta_at_design.ncols()
    }

    pub fn theta_column(&self, s: usize) -> Vec<f64> {
        self.theta.column(s).iter().copied().collect()
    }

    pub fn eta_posterior_mean(&self) -> DVector<f64> {
        self.eta_at_design.row_mean().transpose()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.a.len();
        if self.theta.nrows() != k || self.eta_at_design.nrows() != k {
            return Err(Error::invalid("trace row counts disagree"));
        }
        if self.a.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::invalid("trace has non-positive inverse bandwidths"));
        }
        if self
            .theta
            .iter()
            .chain(self.eta_at_design.iter())
            .chain(self.a.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::numerical("trace contains non-finite draws"));
        }
        Ok(())
    }

    /// One row per kept iteration: θ coordinates, a, then the first
    /// [`CSV_ETA_COLUMNS`] η design values.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let k_eta = self.n().min(CSV_ETA_COLUMNS);
        let mut header: Vec<String> = (1..=self.p()).map(|s| format!("theta{s}")).collect();
        header.push("a".into());
        header.extend((1..=k_eta).map(|i| format!("eta{i}")));
        writeln!(w, "{}", header.join(","))?;
        for t in 0..self.len() {
            let mut row: Vec<String> = self.theta.row(t).iter().map(|x| format!("{x}")).collect();
            row.push(format!("{}", self.a[t]));
            row.extend((0..k_eta).map(|i| format!("{}", self.eta_at_design[(t, i)])));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}
