//! Posterior summaries (medians, quantiles, credible intervals, the
//! quantile-based efficient variance estimate) and the Bernstein–von Mises
//! diagnostic against the efficient Gaussian limit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lfd::{logistic, LfdEstimate};
use crate::linalg::{spd_inverse, symmetrize};
use crate::samplers::McmcTrace;

/// Fewer kept draws than this and quantiles are not reported.
pub const MIN_DRAWS: usize = 100;
/// Level used for the variance reconstruction unless overridden.
pub const DEFAULT_VARIANCE_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub median: DVector<f64>,
    /// Sorted, deduplicated quantile levels.
    pub levels: Vec<f64>,
    /// p × levels.len(); entry (s, j) is q̂_{s, levels[j]}.
    pub quantiles: DMatrix<f64>,
    /// (q̂_{s,0.025}, q̂_{s,0.975}) per coordinate.
    pub ci95: Vec<(f64, f64)>,
    /// V̂*, the reconstructed asymptotic covariance of √n(θ − θ̂).
    pub vhat: DMatrix<f64>,
    /// √(V̂*_ss / n)
    pub se: DVector<f64>,
    /// Set when some V̂*_ss is not positive (e.g. a point-mass posterior).
    pub degenerate: bool,
}

impl PosteriorSummary {
    pub fn quantile(&self, s: usize, level: f64) -> Option<f64> {
        self.levels
            .iter()
            .position(|l| (l - level).abs() < 1e-12)
            .map(|j| self.quantiles[(s, j)])
    }

    pub fn covers(&self, s: usize, value: f64) -> bool {
        let (lo, hi) = self.ci95[s];
        lo <= value && value <= hi
    }
}

/// Linear-interpolation (type 7) quantile of already sorted values.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Squared scaled width n·((q̂_{1−α/2} − q̂_{α/2}) / (2 z_{1−α/2}))².
fn width_variance(sorted: &[f64], alpha: f64, n: usize) -> f64 {
    let z = std_normal().inverse_cdf(1.0 - alpha / 2.0);
    let width = quantile_sorted(sorted, 1.0 - alpha / 2.0) - quantile_sorted(sorted, alpha / 2.0);
    let root = (n as f64).sqrt() * width / (2.0 * z);
    root * root
}

pub fn summarize(trace: &McmcTrace, levels: &[f64]) -> Result<PosteriorSummary> {
    summarize_with_alpha(trace, levels, DEFAULT_VARIANCE_ALPHA)
}

/// Summaries from the θ draws of `trace`; `alpha` sets the interval used
/// for V̂*.
pub fn summarize_with_alpha(
    trace: &McmcTrace,
    levels: &[f64],
    alpha: f64,
) -> Result<PosteriorSummary> {
    if trace.len() < MIN_DRAWS {
        return Err(Error::InsufficientDraws {
            got: trace.len(),
            needed: MIN_DRAWS,
        });
    }
    if levels.iter().chain([&alpha]).any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(Error::invalid("quantile levels must lie in (0, 1)"));
    }
    let mut all_levels: Vec<f64> = levels.iter().copied().chain([0.025, 0.5, 0.975]).collect();
    all_levels.sort_by(f64::total_cmp);
    all_levels.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let p = trace.p();
    let n = trace.n();
    let columns: Vec<Vec<f64>> = (0..p).map(|s| sorted(trace.theta_column(s))).collect();

    let quantiles = DMatrix::from_fn(p, all_levels.len(), |s, j| {
        quantile_sorted(&columns[s], all_levels[j])
    });
    let median = DVector::from_fn(p, |s, _| quantile_sorted(&columns[s], 0.5));
    let ci95 = (0..p)
        .map(|s| {
            (
                quantile_sorted(&columns[s], 0.025),
                quantile_sorted(&columns[s], 0.975),
            )
        })
        .collect();

    let mut vhat = DMatrix::zeros(p, p);
    for s in 0..p {
        vhat[(s, s)] = width_variance(&columns[s], alpha, n);
    }
    for s in 0..p {
        for s2 in (s + 1)..p {
            let pair = sorted(
                trace
                    .theta
                    .column(s)
                    .iter()
                    .zip(trace.theta.column(s2).iter())
                    .map(|(a, b)| a + b)
                    .collect(),
            );
            let v = 0.5 * (width_variance(&pair, alpha, n) - vhat[(s, s)] - vhat[(s2, s2)]);
            vhat[(s, s2)] = v;
            vhat[(s2, s)] = v;
        }
    }
    let se = DVector::from_fn(p, |s, _| (vhat[(s, s)].max(0.0) / n as f64).sqrt());
    let degenerate = (0..p).any(|s| !(vhat[(s, s)] > 0.0));
    Ok(PosteriorSummary {
        median,
        levels: all_levels,
        quantiles,
        ci95,
        vhat,
        se,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleSource {
    AnalyticPLM,
    AnalyticGPLMLogistic,
}

/// Efficient information Ĩ₀ and the efficient-estimator fluctuation Δ̃ₙ at
/// the truth, for judging how close a posterior is to its Gaussian limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleQuantities {
    pub theta0: DVector<f64>,
    pub efficient_info: DMatrix<f64>,
    pub delta_n: DVector<f64>,
    pub n: usize,
    pub source: OracleSource,
}

impl OracleQuantities {
    /// Mean and sd of the limiting normal of coordinate s:
    /// N(θ₀ₛ + Δ̃ₙₛ/√n, Ĩ₀^{ss}/n).
    pub fn limit_marginal(&self, s: usize) -> Result<(f64, f64)> {
        let inv = spd_inverse(&self.efficient_info)
            .ok_or_else(|| Error::DegenerateDesign("efficient information is singular".into()))?;
        let rn = (self.n as f64).sqrt();
        Ok((
            self.theta0[s] + self.delta_n[s] / rn,
            (inv[(s, s)] / self.n as f64).sqrt(),
        ))
    }
}

fn truth(data: &Dataset) -> Result<&crate::data::GroundTruth> {
    data.truth
        .as_ref()
        .ok_or_else(|| Error::invalid("oracle quantities need ground truth"))
}

fn finish_oracle(
    theta0: DVector<f64>,
    mut info: DMatrix<f64>,
    score_sum: DVector<f64>,
    n: usize,
    source: OracleSource,
) -> Result<OracleQuantities> {
    symmetrize(&mut info);
    let min_eig = info.symmetric_eigenvalues().min();
    if !(min_eig >= 1e-10) {
        return Err(Error::DegenerateDesign(format!(
            "efficient information has minimum eigenvalue {min_eig:e}"
        )));
    }
    let inv = spd_inverse(&info)
        .ok_or_else(|| Error::DegenerateDesign("efficient information is singular".into()))?;
    let delta_n = inv * score_sum / (n as f64).sqrt();
    Ok(OracleQuantities {
        theta0,
        efficient_info: info,
        delta_n,
        n,
        source,
    })
}

/// Gaussian partially linear model: with Rᵢ = Uᵢ − E[U | Vᵢ] and
/// wᵢ = Yᵢ − θ₀ᵀUᵢ − η₀(Vᵢ), Ĩ₀ = (nσ²)⁻¹ Σ RᵢRᵢᵀ and
/// Δ̃ₙ = n^{−1/2} Ĩ₀⁻¹ Σ wᵢRᵢ/σ².
pub fn oracle_plm(data: &Dataset) -> Result<OracleQuantities> {
    let t = truth(data)?;
    let (n, p) = (data.n(), data.p());
    let sigma2 = t.noise_sd * t.noise_sd;
    let resid_u = &data.u - &t.cond_mean_u;
    let w = &data.y - &data.u * &t.theta0 - &t.eta0;
    let info = resid_u.transpose() * &resid_u / (n as f64 * sigma2);
    let mut score = DVector::zeros(p);
    for i in 0..n {
        score += resid_u.row(i).transpose() * (w[i] / sigma2);
    }
    finish_oracle(t.theta0.clone(), info, score, n, OracleSource::AnalyticPLM)
}

/// Logistic partially linear model: with Rᵢ = Uᵢ + h*(Vᵢ), f₀ = p₀(1 − p₀)
/// and Wᵢ = Yᵢ − p₀ᵢ, Ĩ₀ = n⁻¹ Σ f₀ᵢRᵢRᵢᵀ and Δ̃ₙ = n^{−1/2} Ĩ₀⁻¹ Σ WᵢRᵢ.
pub fn oracle_gplm_logistic(data: &Dataset, h_star: &LfdEstimate) -> Result<OracleQuantities> {
    let t = truth(data)?;
    let (n, p) = (data.n(), data.p());
    if h_star.nrows() != n || h_star.ncols() != p {
        return Err(Error::invalid("least favorable direction does not match the data"));
    }
    let r = &data.u + &h_star.at_design;
    let g = &data.u * &t.theta0 + &t.eta0;
    let mut info = DMatrix::zeros(p, p);
    let mut score = DVector::zeros(p);
    for i in 0..n {
        let prob = logistic(g[i]);
        let ri = r.row(i).transpose();
        info += &ri * ri.transpose() * (prob * (1.0 - prob));
        score += ri * (data.y[i] - prob);
    }
    info /= n as f64;
    finish_oracle(t.theta0.clone(), info, score, n, OracleSource::AnalyticGPLMLogistic)
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `sample` and a
/// continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let xs = sorted(sample.to_vec());
    let m = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / m).max((i + 1) as f64 / m - f)
        })
        .fold(0.0, f64::max)
}

/// Per-coordinate KS distance between the θ draws and the limiting normal.
pub fn bvm_distance(trace: &McmcTrace, oracle: &OracleQuantities) -> Result<Vec<f64>> {
    if trace.p() != oracle.theta0.len() {
        return Err(Error::invalid(format!(
            "trace has {} coordinates, oracle has {}",
            trace.p(),
            oracle.theta0.len()
        )));
    }
    if trace.is_empty() {
        return Err(Error::InsufficientDraws { got: 0, needed: 1 });
    }
    (0..trace.p())
        .map(|s| {
            let (mean, sd) = oracle.limit_marginal(s)?;
            let law = Normal::new(mean, sd)
                .map_err(|e| Error::numerical(format!("limit normal: {e}")))?;
            Ok(ks_statistic(&trace.theta_column(s), |x| law.cdf(x)))
        })
        .collect()
}
