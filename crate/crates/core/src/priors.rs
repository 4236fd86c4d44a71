//! Independent and bias-corrected dependent priors on (θ, η), with a fixed
//! or gamma-distributed inverse bandwidth.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma};
use std::f64::consts::PI;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::GramMatrix;
use crate::lfd::{cross_validated_bandwidth, nadaraya_watson, LfdEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorStructure {
    /// θ and η a priori independent.
    Independent,
    /// η | θ centred at θᵀĥ(V).
    Dependent(LfdEstimate),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthPrior {
    Fixed { inverse_bandwidth: f64 },
    /// A^d ~ Ga(shape, rate), restricted to A ≥ truncation.
    Adaptive {
        shape: f64,
        rate: f64,
        #[serde(default)]
        truncation: f64,
    },
}

impl BandwidthPrior {
    pub fn adaptive(shape: f64, rate: f64) -> Self {
        BandwidthPrior::Adaptive {
            shape,
            rate,
            truncation: 0.0,
        }
    }
}

/// Conjugate inverse-gamma prior on σ², used only when the noise level is
/// sampled rather than fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePrior {
    pub shape: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// φ₀: θ ~ N(0, I/φ₀).
    pub theta_precision: f64,
    pub structure: PriorStructure,
    pub bandwidth: BandwidthPrior,
    /// Known noise standard deviation σ (starting value if `noise_update` is set).
    pub noise_sd: f64,
    #[serde(default)]
    pub noise_update: Option<NoisePrior>,
}

pub const DEFAULT_THETA_PRECISION: f64 = 0.01;

impl PriorSpec {
    pub fn new(structure: PriorStructure, bandwidth: BandwidthPrior, noise_sd: f64) -> Result<Self> {
        let spec = Self {
            theta_precision: DEFAULT_THETA_PRECISION,
            structure,
            bandwidth,
            noise_sd,
            noise_update: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_theta_precision(mut self, phi0: f64) -> Result<Self> {
        self.theta_precision = phi0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.theta_precision) {
            return Err(Error::invalid("theta precision φ₀ must be positive"));
        }
        if !pos(self.noise_sd) {
            return Err(Error::invalid("noise sd must be positive"));
        }
        match self.bandwidth {
            BandwidthPrior::Fixed { inverse_bandwidth } if !pos(inverse_bandwidth) => {
                return Err(Error::invalid("fixed inverse bandwidth must be positive"));
            }
            BandwidthPrior::Adaptive {
                shape,
                rate,
                truncation,
            } if !pos(shape) || !pos(rate) || !(truncation >= 0.0) || !truncation.is_finite() => {
                return Err(Error::invalid(
                    "adaptive bandwidth needs shape > 0, rate > 0 and truncation ≥ 0",
                ));
            }
            _ => {}
        }
        if let Some(np) = self.noise_update {
            if !pos(np.shape) || !pos(np.scale) {
                return Err(Error::invalid("noise prior needs positive shape and scale"));
            }
        }
        Ok(())
    }

    /// Checks the prior against a dataset of `n` rows and `p` linear covariates.
    pub fn check_dims(&self, n: usize, p: usize) -> Result<()> {
        self.validate()?;
        if let PriorStructure::Dependent(lfd) = &self.structure {
            if lfd.nrows() != n || lfd.ncols() != p {
                return Err(Error::invalid(format!(
                    "direction estimate is {}×{} but data is {n}×{p}",
                    lfd.nrows(),
                    lfd.ncols()
                )));
            }
        }
        Ok(())
    }

    pub fn is_dependent(&self) -> bool {
        matches!(self.structure, PriorStructure::Dependent(_))
    }
}

/// Log density of the inverse bandwidth `a` when A^d ~ Ga(a₀, b₀) truncated to
/// A ≥ t₀:
/// log d + (d·a₀ − 1) log a − b₀ aᵈ + a₀ log b₀ − log Γ(a₀) − log P(A ≥ t₀).
pub fn log_prior_inverse_bandwidth(a: f64, spec: &PriorSpec, d: usize) -> Result<f64> {
    match spec.bandwidth {
        BandwidthPrior::Fixed { .. } => Err(Error::Contract(
            "bandwidth prior density requested from a fixed-bandwidth prior".into(),
        )),
        BandwidthPrior::Adaptive {
            shape,
            rate,
            truncation,
        } => log_inverse_bandwidth_density(a, shape, rate, truncation, d),
    }
}

pub(crate) fn log_inverse_bandwidth_density(
    a: f64,
    shape: f64,
    rate: f64,
    truncation: f64,
    d: usize,
) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::invalid(format!("inverse bandwidth must be positive, got {a}")));
    }
    if d == 0 {
        return Err(Error::invalid("covariate dimension must be at least 1"));
    }
    if a < truncation {
        return Ok(f64::NEG_INFINITY);
    }
    let gamma = Gamma::new(shape, rate)
        .map_err(|e| Error::invalid(format!("bad gamma hyperparameters: {e}")))?;
    let df = d as f64;
    let t = a.powf(df);
    let log_tail = if truncation > 0.0 {
        gamma.sf(truncation.powf(df)).ln()
    } else {
        0.0
    };
    Ok(df.ln() + (df - 1.0) * a.ln() + gamma.ln_pdf(t) - log_tail)
}

/// Mean shift θᵀĥ(Vᵢ) of the nuisance prior under the dependent structure.
pub fn prior_mean_shift(theta: &DVector<f64>, spec: &PriorSpec) -> Result<DVector<f64>> {
    match &spec.structure {
        PriorStructure::Independent => Err(Error::Contract(
            "the independent prior has no θ-dependent mean shift".into(),
        )),
        PriorStructure::Dependent(lfd) => {
            if lfd.ncols() != theta.len() {
                return Err(Error::invalid(format!(
                    "θ has {} coordinates but the direction has {}",
                    theta.len(),
                    lfd.ncols()
                )));
            }
            Ok(&lfd.at_design * theta)
        }
    }
}

/// log N(θ; 0, I/φ₀)
pub fn log_prior_theta(theta: &DVector<f64>, spec: &PriorSpec) -> f64 {
    let p = theta.len() as f64;
    let phi = spec.theta_precision;
    0.5 * p * (phi / (2.0 * PI)).ln() - 0.5 * phi * theta.norm_squared()
}

/// log p(θ) + log p(η | θ, a) at the design points, with `gram` the
/// covariance of the nuisance prior for the current bandwidth.
pub fn log_joint_prior(
    theta: &DVector<f64>,
    eta: &DVector<f64>,
    gram: &GramMatrix,
    spec: &PriorSpec,
) -> Result<f64> {
    let centred = match spec.structure {
        PriorStructure::Independent => eta.clone(),
        PriorStructure::Dependent(_) => eta - prior_mean_shift(theta, spec)?,
    };
    Ok(log_prior_theta(theta, spec) + gaussian_log_density(&centred, gram))
}

/// log N(x; 0, gram)
pub fn gaussian_log_density(x: &DVector<f64>, gram: &GramMatrix) -> f64 {
    let chol = gram.chol();
    let z = chol.solve_lower(x);
    -0.5 * (x.len() as f64 * (2.0 * PI).ln() + chol.ln_det() + z.norm_squared())
}

/// Serializable prior recipe; the direction estimate is computed from the
/// data when the prior is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub structure: StructureConfig,
    pub bandwidth: BandwidthPrior,
    #[serde(default = "default_theta_precision")]
    pub theta_precision: f64,
    pub noise_sd: f64,
    #[serde(default)]
    pub noise_update: Option<NoisePrior>,
}

fn default_theta_precision() -> f64 {
    DEFAULT_THETA_PRECISION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureConfig {
    Independent,
    /// Dependent prior with a Nadaraya–Watson direction estimate. An explicit
    /// bandwidth wins over `cross_validate`; with neither, the
    /// normal-reference rule is used.
    NadarayaWatson {
        #[serde(default)]
        bandwidth: Option<Vec<f64>>,
        #[serde(default)]
        cross_validate: bool,
    },
    /// Dependent prior with the direction given explicitly at the design points.
    Explicit { at_design: Vec<Vec<f64>> },
}

impl PriorConfig {
    pub fn build(&self, data: &Dataset) -> Result<PriorSpec> {
        let structure = match &self.structure {
            StructureConfig::Independent => PriorStructure::Independent,
            StructureConfig::NadarayaWatson {
                bandwidth,
                cross_validate,
            } => {
                let bw = match (bandwidth, cross_validate) {
                    (Some(b), _) => Some(b.clone()),
                    (None, true) => Some(cross_validated_bandwidth(&data.u, &data.v)?),
                    (None, false) => None,
                };
                PriorStructure::Dependent(nadaraya_watson(&data.u, &data.v, bw.as_deref())?)
            }
            StructureConfig::Explicit { at_design } => {
                let n = at_design.len();
                let p = at_design.first().map_or(0, Vec::len);
                if at_design.iter().any(|r| r.len() != p) {
                    return Err(Error::invalid("ragged direction rows"));
                }
                PriorStructure::Dependent(LfdEstimate {
                    at_design: DMatrix::from_fn(n, p, |i, j| at_design[i][j]),
                    bandwidth: None,
                })
            }
        };
        let spec = PriorSpec {
            theta_precision: self.theta_precision,
            structure,
            bandwidth: self.bandwidth,
            noise_sd: self.noise_sd,
            noise_update: self.noise_update,
        };
        spec.check_dims(data.n(), data.p())?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram, KernelConfig};
    use approx::assert_relative_eq;

    fn adaptive(shape: f64, rate: f64, truncation: f64) -> PriorSpec {
        PriorSpec::new(
            PriorStructure::Independent,
            BandwidthPrior::Adaptive {
                shape,
                rate,
                truncation,
            },
            0.5,
        )
        .unwrap()
    }

    fn dependent(col: &[f64]) -> PriorSpec {
        let lfd = LfdEstimate {
            at_design: DMatrix::from_column_slice(col.len(), 1, col),
            bandwidth: None,
        };
        PriorSpec::new(PriorStructure::Dependent(lfd), BandwidthPrior::adaptive(1.0, 1.0), 0.5)
            .unwrap()
    }

    #[test]
    fn unit_gamma_is_exponential_in_a() {
        let spec = adaptive(1.0, 1.0, 0.0);
        let r = log_prior_inverse_bandwidth(1.0, &spec, 1).unwrap()
            - log_prior_inverse_bandwidth(2.0, &spec, 1).unwrap();
        assert_relative_eq!(r, 1.0, epsilon = 1e-12);
        assert_relative_eq!(log_prior_inverse_bandwidth(0.7, &spec, 1).unwrap(), -0.7, epsilon = 1e-12);
    }

    #[test]
    fn two_dimensional_change_of_variables() {
        let spec = adaptive(1.0, 1.0, 0.0);
        let r = log_prior_inverse_bandwidth(1.0, &spec, 2).unwrap()
            - log_prior_inverse_bandwidth(2.0, &spec, 2).unwrap();
        assert_relative_eq!(r, -(2.0f64).ln() + 3.0, epsilon = 1e-12);
    }

    #[test]
    fn truncation_and_errors() {
        let spec = adaptive(1.0, 1.0, 0.5);
        assert_eq!(log_prior_inverse_bandwidth(0.3, &spec, 1).unwrap(), f64::NEG_INFINITY);
        // Exponential tail above 0.5 has mass e^{-0.5}.
        assert_relative_eq!(log_prior_inverse_bandwidth(1.0, &spec, 1).unwrap(), -0.5, epsilon = 1e-12);
        assert!(log_prior_inverse_bandwidth(0.0, &spec, 1).is_err());
        assert!(log_prior_inverse_bandwidth(-1.0, &spec, 1).is_err());
        let fixed = PriorSpec::new(
            PriorStructure::Independent,
            BandwidthPrior::Fixed { inverse_bandwidth: 2.0 },
            0.5,
        )
        .unwrap();
        assert!(matches!(log_prior_inverse_bandwidth(1.0, &fixed, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(PriorSpec::new(PriorStructure::Independent, BandwidthPrior::adaptive(0.0, 1.0), 0.5).is_err());
        assert!(PriorSpec::new(PriorStructure::Independent, BandwidthPrior::adaptive(1.0, 1.0), 0.0).is_err());
        assert!(PriorSpec::new(
            PriorStructure::Independent,
            BandwidthPrior::Fixed { inverse_bandwidth: -1.0 },
            0.5
        )
        .is_err());
        let spec = PriorSpec::new(PriorStructure::Independent, BandwidthPrior::adaptive(1.0, 1.0), 0.5).unwrap();
        assert!(spec.with_theta_precision(0.0).is_err());
        assert!(dependent(&[1.0, 2.0]).check_dims(3, 1).is_err());
        assert!(dependent(&[1.0, 2.0]).check_dims(2, 1).is_ok());
    }

    #[test]
    fn mean_shift_examples() {
        let spec = dependent(&[-1.0, -0.5, 0.0]);
        let zero = prior_mean_shift(&DVector::from_element(1, 0.0), &spec).unwrap();
        assert!(zero.iter().all(|x| *x == 0.0));
        let s = prior_mean_shift(&DVector::from_element(1, 2.0), &spec).unwrap();
        assert_eq!(s.as_slice(), &[-2.0, -1.0, 0.0]);
        let ind = adaptive(1.0, 1.0, 0.0);
        assert!(matches!(
            prior_mean_shift(&DVector::from_element(1, 1.0), &ind),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn dependent_prior_separates_after_recentring() {
        let h = [-0.4, 0.1, 0.9, 2.0];
        let spec = dependent(&h);
        let v = DMatrix::from_column_slice(4, 1, &[-1.0, 0.0, 0.5, 1.5]);
        let g = gram(&v, &KernelConfig::squared_exponential(1.3).unwrap()).unwrap();
        let theta = DVector::from_element(1, 0.7);
        let xi = DVector::from_vec(vec![0.3, -0.2, 0.1, 0.5]);
        let eta = &xi + prior_mean_shift(&theta, &spec).unwrap();
        let joint = log_joint_prior(&theta, &eta, &g, &spec).unwrap();
        let separate = log_prior_theta(&theta, &spec) + gaussian_log_density(&xi, &g);
        assert_relative_eq!(joint, separate, epsilon = 1e-12);
    }

    #[test]
    fn prior_config_round_trips_through_json() {
        let cfg = PriorConfig {
            structure: StructureConfig::NadarayaWatson {
                bandwidth: None,
                cross_validate: false,
            },
            bandwidth: BandwidthPrior::adaptive(1.0, 1.0),
            theta_precision: 0.01,
            noise_sd: 0.5,
            noise_update: None,
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: PriorConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
