use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GroundTruth};
use crate::error::{Error, Result};
use crate::lfd::logistic;

/// True coefficient of U in every simulation model.
pub const THETA0: f64 = 0.5;
/// Noise sd of the Gaussian models.
pub const NOISE_SD: f64 = 0.5;

/// Simulation designs. In all of them V ~ N(0, 1) and U | V ~ N(m(V), 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    /// η₀(v) = exp(v), m(v) = 0.5|v|³
    M1,
    /// η₀(v) = exp(v), m(v) = 0.5v³
    M2,
    /// η₀(v) = exp(|v|), m(v) = 0.5|v|³
    M3,
    /// η₀(v) = exp(|v|), m(v) = 0.5v³
    M4,
    /// Binary Y with logit P(Y = 1) = 0.5U + sin(V), m(v) = 0.5v.
    LogisticDemo,
}

impl Model {
    pub const ALL: [Model; 5] = [Model::M1, Model::M2, Model::M3, Model::M4, Model::LogisticDemo];

    pub fn name(self) -> &'static str {
        match self {
            Model::M1 => "M1",
            Model::M2 => "M2",
            Model::M3 => "M3",
            Model::M4 => "M4",
            Model::LogisticDemo => "LogisticDemo",
        }
    }

    pub fn is_binary(self) -> bool {
        self == Model::LogisticDemo
    }

    pub fn eta0(self, v: f64) -> f64 {
        match self {
            Model::M1 | Model::M2 => v.exp(),
            Model::M3 | Model::M4 => v.abs().exp(),
            Model::LogisticDemo => v.sin(),
        }
    }

    /// E[U | V = v]
    pub fn cond_mean_u(self, v: f64) -> f64 {
        match self {
            Model::M1 | Model::M3 => 0.5 * v.abs().powi(3),
            Model::M2 | Model::M4 => 0.5 * v.powi(3),
            Model::LogisticDemo => 0.5 * v,
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown model {s:?}")))
    }
}

/// Draws n rows of `model` with the default noise level.
pub fn generate<R: Rng + ?Sized>(model: Model, n: usize, rng: &mut R) -> Result<Dataset> {
    generate_with_noise(model, n, NOISE_SD, rng)
}

/// As [`generate`] with the Gaussian noise sd replaced by `noise_sd`
/// (ignored for binary models). Per row the draw order is V, U, then the
/// response noise.
pub fn generate_with_noise<R: Rng + ?Sized>(
    model: Model,
    n: usize,
    noise_sd: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if !(noise_sd > 0.0) || !noise_sd.is_finite() {
        return Err(Error::invalid("noise sd must be positive"));
    }
    let mut u = DMatrix::zeros(n, 1);
    let mut v = DMatrix::zeros(n, 1);
    let mut y = DVector::zeros(n);
    let mut eta0 = DVector::zeros(n);
    let mut cond = DMatrix::zeros(n, 1);
    for i in 0..n {
        let vi: f64 = rng.sample(StandardNormal);
        let mi = model.cond_mean_u(vi);
        let ui = mi + rng.sample::<f64, _>(StandardNormal);
        let ei = model.eta0(vi);
        let g = THETA0 * ui + ei;
        y[i] = if model.is_binary() {
            let p = logistic(g);
            if rng.random::<f64>() < p {
                1.0
            } else {
                0.0
            }
        } else {
            g + noise_sd * rng.sample::<f64, _>(StandardNormal)
        };
        u[(i, 0)] = ui;
        v[(i, 0)] = vi;
        eta0[i] = ei;
        cond[(i, 0)] = mi;
    }
    Ok(Dataset {
        u,
        v,
        y,
        truth: Some(GroundTruth {
            theta0: DVector::from_element(1, THETA0),
            eta0,
            cond_mean_u: cond,
            noise_sd: if model.is_binary() { 1.0 } else { noise_sd },
        }),
    })
}
