use rand::Rng;
use rand_distr::StandardNormal;

use super::McmcConfig;
use crate::error::Result;
use crate::priors::{log_inverse_bandwidth_density, BandwidthPrior, PriorSpec};

/// Random walk on log a, optionally restricted to the lattice
/// {exp(k·step) : k ∈ ℤ}.
///
/// On the lattice the prior mass of a point is proportional to the density
/// of log a, p(a)·a, so the target carries the same log-Jacobian as the
/// continuous walk. Lattice values repeat, which lets samplers reuse
/// factorizations for previously visited bandwidths.
#[derive(Debug, Clone, Copy)]
pub struct BandwidthWalk {
    step: f64,
    rw_sd: f64,
    shape: f64,
    rate: f64,
    truncation: f64,
    d: usize,
}

impl BandwidthWalk {
    /// `None` when the prior fixes the bandwidth.
    pub fn new(prior: &PriorSpec, mcmc: &McmcConfig, d: usize) -> Option<Self> {
        match prior.bandwidth {
            BandwidthPrior::Fixed { .. } => None,
            BandwidthPrior::Adaptive {
                shape,
                rate,
                truncation,
            } => Some(Self {
                step: mcmc.log_a_step,
                rw_sd: mcmc.rw_sd_log_a,
                shape,
                rate,
                truncation,
                d,
            }),
        }
    }

    fn index(&self, a: f64) -> i64 {
        (a.ln() / self.step).round() as i64
    }

    fn from_index(&self, k: i64) -> f64 {
        (k as f64 * self.step).exp()
    }

    /// Nearest admissible value.
    pub fn snap(&self, a: f64) -> f64 {
        if self.step == 0.0 {
            a
        } else {
            self.from_index(self.index(a))
        }
    }

    pub fn propose<R: Rng + ?Sized>(&self, a: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        if self.step == 0.0 {
            a * (self.rw_sd * z).exp()
        } else {
            let jump = (self.rw_sd / self.step * z).round() as i64;
            self.from_index(self.index(a) + jump)
        }
    }

    /// log p(a) + log a, i.e. the prior on the log scale up to a constant.
    pub fn log_prior(&self, a: f64) -> Result<f64> {
        Ok(log_inverse_bandwidth_density(a, self.shape, self.rate, self.truncation, self.d)? + a.ln())
    }
}
