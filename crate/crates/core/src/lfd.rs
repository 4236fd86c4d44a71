//! Least favorable directions for partially linear models and the
//! Nadaraya–Watson plug-in estimate used by the dependent prior.
//!
//! Every estimate here is the direction that gets *added* to the nuisance
//! prior mean, θᵀĥ(V). For the Gaussian model that is −E[U | V].

use nalgebra::DMatrix;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A least favorable direction evaluated at the design points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfdEstimate {
    /// n×p, row i is ĥ(Vᵢ).
    pub at_design: DMatrix<f64>,
    /// Kernel bandwidth per covariate coordinate; `None` for exact formulas.
    pub bandwidth: Option<Vec<f64>>,
}

impl LfdEstimate {
    pub fn nrows(&self) -> usize {
        self.at_design.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.at_design.ncols()
    }

    /// Empirical norm ‖ĥ − other‖_n, averaged over coordinates.
    pub fn empirical_distance(&self, other: &LfdEstimate) -> f64 {
        let diff = &self.at_design - &other.at_design;
        (diff.iter().map(|x| x * x).sum::<f64>() / diff.nrows() as f64).sqrt()
    }
}

fn rows(v: &DMatrix<f64>) -> impl Iterator<Item = Vec<f64>> + '_ {
    (0..v.nrows()).map(move |i| v.row(i).iter().copied().collect())
}

fn collect_rows(values: Vec<Vec<f64>>, p: usize) -> Result<DMatrix<f64>> {
    let n = values.len();
    let mut out = DMatrix::zeros(n, p);
    for (i, row) in values.into_iter().enumerate() {
        if row.len() != p {
            return Err(Error::invalid(format!(
                "direction has {} coordinates at row {i}, expected {p}",
                row.len()
            )));
        }
        for (s, x) in row.into_iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::invalid(format!("non-finite direction at row {i}")));
            }
            out[(i, s)] = x;
        }
    }
    Ok(out)
}

/// h*(v) = −E[U | V = v] for the Gaussian partially linear model.
pub fn lfd_plm_analytic<F>(cond_mean_u_given_v: F, v: &DMatrix<f64>) -> Result<LfdEstimate>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if v.nrows() == 0 {
        return Err(Error::invalid("no design rows"));
    }
    let values: Vec<Vec<f64>> = rows(v)
        .map(|vi| cond_mean_u_given_v(&vi).into_iter().map(|m| -m).collect())
        .collect();
    let p = values[0].len();
    Ok(LfdEstimate {
        at_design: collect_rows(values, p)?,
        bandwidth: None,
    })
}

/// Response link of a generalized partially linear model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    /// F(t) = t, 𝒱(s) = 1
    Identity,
    /// F(t) = eᵗ/(1+eᵗ), 𝒱(s) = s(1−s)
    Logit,
    /// F(t) = eᵗ, 𝒱(s) = s²
    ExpHazard,
}

impl Link {
    pub fn mean(self, t: f64) -> f64 {
        match self {
            Link::Identity => t,
            Link::Logit => logistic(t),
            Link::ExpHazard => t.exp(),
        }
    }

    /// f(t)·l(t) with f = F′ and l = f / 𝒱(F).
    pub fn information_weight(self, t: f64) -> f64 {
        match self {
            Link::Identity | Link::ExpHazard => 1.0,
            Link::Logit => {
                let p = logistic(t);
                p * (1.0 - p)
            }
        }
    }
}

pub(crate) fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub type RowFn<'a> = &'a (dyn Fn(&[f64]) -> Vec<f64> + Sync);
pub type RowSampler<'a> = &'a (dyn Fn(&[f64], &mut dyn RngCore) -> Vec<f64> + Sync);

/// How the conditional law of U given V is made available.
#[derive(Clone, Copy)]
pub enum ConditionalLaw<'a> {
    /// U = c(V) almost surely.
    Degenerate(RowFn<'a>),
    /// Only E[U | V] is known; exact for links with a constant weight.
    Mean(RowFn<'a>),
    /// Draws from U | V = v; expectations by Monte Carlo.
    Sampler {
        draw: RowSampler<'a>,
        draws_per_row: usize,
        seed: u64,
    },
}

/// Default Monte Carlo size for conditional expectations.
pub const GPLM_DEFAULT_DRAWS: usize = 10_000;

/// h*(v) = −E[U f₀ l₀ | V = v] / E[f₀ l₀ | V = v] with f₀, l₀ evaluated at
/// the true linear predictor g₀(u, v).
pub fn lfd_gplm_analytic<G>(
    link: Link,
    g0: G,
    law: ConditionalLaw<'_>,
    v: &DMatrix<f64>,
) -> Result<LfdEstimate>
where
    G: Fn(&[f64], &[f64]) -> f64,
{
    if v.nrows() == 0 {
        return Err(Error::invalid("no design rows"));
    }
    let constant_weight = matches!(link, Link::Identity | Link::ExpHazard);
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(v.nrows());
    for (i, vi) in rows(v).enumerate() {
        let row = match law {
            ConditionalLaw::Degenerate(c) => {
                let u = c(&vi);
                let w = link.information_weight(g0(&u, &vi));
                if w < 1e-12 {
                    return Err(degenerate(i));
                }
                u.into_iter().map(|x| -x).collect()
            }
            ConditionalLaw::Mean(m) => {
                if !constant_weight {
                    return Err(Error::invalid(
                        "a conditional mean alone does not determine the direction for this link; supply a sampler",
                    ));
                }
                m(&vi).into_iter().map(|x| -x).collect()
            }
            ConditionalLaw::Sampler {
                draw,
                draws_per_row,
                seed,
            } => {
                if draws_per_row == 0 {
                    return Err(Error::invalid("draws_per_row must be positive"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let mut num: Vec<f64> = Vec::new();
                let mut den = 0.0;
                for _ in 0..draws_per_row {
                    let u = draw(&vi, &mut rng);
                    let w = link.information_weight(g0(&u, &vi));
                    if num.is_empty() {
                        num = vec![0.0; u.len()];
                    }
                    for (acc, x) in num.iter_mut().zip(&u) {
                        *acc += w * x;
                    }
                    den += w;
                }
                den /= draws_per_row as f64;
                if den < 1e-12 {
                    return Err(degenerate(i));
                }
                num.into_iter()
                    .map(|x| -(x / draws_per_row as f64) / den)
                    .collect()
            }
        };
        values.push(row);
    }
    let p = values[0].len();
    Ok(LfdEstimate {
        at_design: collect_rows(values, p)?,
        bandwidth: None,
    })
}

fn degenerate(row: usize) -> Error {
    Error::DegenerateDesign(format!(
        "conditional information weight vanishes at design row {row}"
    ))
}

/// Normal-reference bandwidth σ̂ (4 / ((d+2) n))^{1/(d+4)} per coordinate.
pub fn normal_reference_bandwidth(v: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = v.shape();
    let factor = (4.0 / ((d as f64 + 2.0) * n as f64)).powf(1.0 / (d as f64 + 4.0));
    (0..d)
        .map(|k| {
            let col = v.column(k);
            let mean = col.mean();
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let sd = var.sqrt();
            // All values equal: any bandwidth gives equal weights.
            if sd > 0.0 {
                sd * factor
            } else {
                1.0
            }
        })
        .collect()
}

/// Nadaraya–Watson estimate of −E[U | V] at each design point with a
/// product Gaussian kernel.
pub fn nadaraya_watson(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    bandwidth: Option<&[f64]>,
) -> Result<LfdEstimate> {
    let (n, p) = u.shape();
    let d = v.ncols();
    if n < 2 {
        return Err(Error::invalid("Nadaraya–Watson needs at least two rows"));
    }
    if v.nrows() != n {
        return Err(Error::invalid(format!(
            "U has {n} rows but V has {}",
            v.nrows()
        )));
    }
    if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite values in U or V"));
    }
    let bw = match bandwidth {
        Some(b) => {
            if b.len() != d || b.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::invalid(
                    "bandwidth needs one positive finite value per V coordinate",
                ));
            }
            b.to_vec()
        }
        None => normal_reference_bandwidth(v),
    };

    let mut out = DMatrix::zeros(n, p);
    let mut weights = vec![0.0; n];
    for i in 0..n {
        for (j, w) in weights.iter_mut().enumerate() {
            let mut q = 0.0;
            for k in 0..d {
                let z = (v[(i, k)] - v[(j, k)]) / bw[k];
                q += z * z;
            }
            *w = (-0.5 * q).exp();
        }
        // Self weight is exp(0) = 1, so the denominator never vanishes.
        let total: f64 = weights.iter().sum();
        for s in 0..p {
            let num: f64 = weights.iter().enumerate().map(|(j, w)| w * u[(j, s)]).sum();
            out[(i, s)] = -num / total;
        }
    }
    Ok(LfdEstimate {
        at_design: out,
        bandwidth: Some(bw),
    })
}

/// Multipliers of the normal-reference bandwidth searched by
/// [`cross_validated_bandwidth`]: 40 log-spaced values in [0.05, 2].
pub fn cv_bandwidth_multipliers() -> Vec<f64> {
    let (lo, hi, k) = (0.05f64.ln(), 2f64.ln(), 40);
    (0..k)
        .map(|i| (lo + (hi - lo) * i as f64 / (k - 1) as f64).exp())
        .collect()
}

/// Leave-one-out squared prediction error of the Nadaraya–Watson fit of U
/// on V, summed over the columns of U. Infinite when some row has no
/// positive weight from the others.
pub fn nw_loo_score(u: &DMatrix<f64>, v: &DMatrix<f64>, bandwidth: &[f64]) -> f64 {
    let (n, p) = u.shape();
    let d = v.ncols();
    let mut score = 0.0;
    for i in 0..n {
        let mut den = 0.0;
        let mut num = vec![0.0; p];
        for j in (0..n).filter(|&j| j != i) {
            let mut q = 0.0;
            for k in 0..d {
                let z = (v[(i, k)] - v[(j, k)]) / bandwidth[k];
                q += z * z;
            }
            let w = (-0.5 * q).exp();
            den += w;
            for (s, acc) in num.iter_mut().enumerate() {
                *acc += w * u[(j, s)];
            }
        }
        if !(den > 0.0) {
            return f64::INFINITY;
        }
        score += (0..p).map(|s| (u[(i, s)] - num[s] / den).powi(2)).sum::<f64>();
    }
    score / n as f64
}

/// Bandwidth minimizing the leave-one-out error over a common multiple of
/// the normal-reference bandwidths (see [`cv_bandwidth_multipliers`]).
/// Ties go to the smaller multiplier.
pub fn cross_validated_bandwidth(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<Vec<f64>> {
    if u.nrows() < 3 || v.nrows() != u.nrows() {
        return Err(Error::invalid("cross-validation needs at least three matching rows"));
    }
    let base = normal_reference_bandwidth(v);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for m in cv_bandwidth_multipliers() {
        let bw: Vec<f64> = base.iter().map(|b| b * m).collect();
        let score = nw_loo_score(u, v, &bw);
        if score.is_finite() && best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, bw));
        }
    }
    best.map(|(_, bw)| bw)
        .ok_or_else(|| Error::DegenerateDesign("no bandwidth gives finite cross-validation error".into()))
}
