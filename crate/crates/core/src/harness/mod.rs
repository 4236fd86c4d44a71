//! Replicate studies: simulate, fit, summarize and aggregate.

mod models;
mod report;

use std::path::PathBuf;

use log::warn;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lfd::{
    cross_validated_bandwidth, lfd_gplm_analytic, lfd_plm_analytic, nadaraya_watson,
    ConditionalLaw, LfdEstimate, Link, GPLM_DEFAULT_DRAWS,
};
use crate::priors::{BandwidthPrior, PriorSpec, PriorStructure, DEFAULT_THETA_PRECISION};
use crate::samplers::{fit_gplm_logistic, fit_plm, McmcConfig, McmcTrace};
use crate::summaries::{bvm_distance, oracle_gplm_logistic, oracle_plm, summarize};

pub use models::{generate, generate_with_noise, Model, NOISE_SD, THETA0};
pub use report::{emit_report, parse_markdown_report, render_report, ReportFormat, ReportRow};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SEMIBVM_THREADS";
/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;
/// Sample sizes of the reference tables.
pub const TABLE_SIZES: [usize; 4] = [50, 100, 200, 400];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PriorSetup {
    /// Independent GP prior on η.
    P1,
    /// Dependent prior shifted by a Nadaraya–Watson estimate of −E[U | V].
    P2,
    /// Dependent prior shifted by the exact least favorable direction.
    P3,
}

impl PriorSetup {
    pub const ALL: [PriorSetup; 3] = [PriorSetup::P1, PriorSetup::P2, PriorSetup::P3];

    pub fn name(self) -> &'static str {
        match self {
            PriorSetup::P1 => "P1",
            PriorSetup::P2 => "P2",
            PriorSetup::P3 => "P3",
        }
    }

    /// Prior for one simulated dataset: a Gamma(1, 1) prior on a^d,
    /// θ ~ N(0, 10²) and the model's true noise sd.
    pub fn build(
        self,
        model: Model,
        data: &Dataset,
        noise_sd: f64,
        rule: DirectionBandwidth,
    ) -> Result<PriorSpec> {
        let structure = match self {
            PriorSetup::P1 => PriorStructure::Independent,
            PriorSetup::P2 => {
                let bw = match rule {
                    DirectionBandwidth::NormalReference => None,
                    DirectionBandwidth::CrossValidated => Some(cross_validated_bandwidth(&data.u, &data.v)?),
                };
                PriorStructure::Dependent(nadaraya_watson(&data.u, &data.v, bw.as_deref())?)
            }
            PriorSetup::P3 => PriorStructure::Dependent(exact_direction(model, data)?),
        };
        PriorSpec::new(structure, BandwidthPrior::adaptive(1.0, 1.0), noise_sd)?
            .with_theta_precision(DEFAULT_THETA_PRECISION)
    }
}

impl std::fmt::Display for PriorSetup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PriorSetup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PriorSetup::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown prior setup {s:?}")))
    }
}

/// The least favorable direction of `model` at the design points: −E[U | V]
/// for Gaussian models, the information-weighted version for the logistic one.
pub fn exact_direction(model: Model, data: &Dataset) -> Result<LfdEstimate> {
    if !model.is_binary() {
        return lfd_plm_analytic(|v| vec![model.cond_mean_u(v[0])], &data.v);
    }
    let draw = |v: &[f64], rng: &mut dyn RngCore| {
        let z: f64 = StandardNormal.sample(rng);
        vec![model.cond_mean_u(v[0]) + z]
    };
    lfd_gplm_analytic(
        Link::Logit,
        |u, v| THETA0 * u[0] + model.eta0(v[0]),
        ConditionalLaw::Sampler {
            draw: &draw,
            draws_per_row: GPLM_DEFAULT_DRAWS,
            seed: 0,
        },
        &data.v,
    )
}

/// Bandwidth used for the Nadaraya–Watson direction of [`PriorSetup::P2`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionBandwidth {
    NormalReference,
    /// Leave-one-out choice among multiples of the normal-reference value.
    #[default]
    CrossValidated,
}

fn default_replicates() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: Model,
    pub prior_setup: PriorSetup,
    pub n: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub mcmc: McmcConfig,
    /// Replicate r uses seed `seed + r`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker cap; falls back to `SEMIBVM_THREADS`, then to all cores.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Replaces the model's noise sd in both the data and the prior.
    #[serde(default)]
    pub noise_sd_override: Option<f64>,
    #[serde(default)]
    pub direction_bandwidth: DirectionBandwidth,
}

impl ExperimentConfig {
    pub fn new(model: Model, prior_setup: PriorSetup, n: usize, replicates: usize, mcmc: McmcConfig) -> Self {
        Self {
            model,
            prior_setup,
            n,
            replicates,
            mcmc,
            seed: 0,
            output_dir: None,
            threads: None,
            noise_sd_override: None,
            direction_bandwidth: DirectionBandwidth::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be at least 1"));
        }
        if self.n < 2 {
            return Err(Error::invalid("n must be at least 2"));
        }
        self.mcmc.validate()
    }

    fn noise_sd(&self) -> f64 {
        self.noise_sd_override.unwrap_or(NOISE_SD)
    }
}

/// Per-replicate results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    /// Posterior median of θ.
    pub theta_hat: Vec<f64>,
    pub sq_err_theta: f64,
    /// ‖η̂ − η₀‖_n with η̂ the posterior mean at the design points.
    pub err_eta: f64,
    /// Posterior standard errors averaged over coordinates.
    pub se: f64,
    /// Whether every 95% interval contains its θ₀ coordinate.
    pub covers: bool,
    /// KS distance to the efficient normal limit, averaged over coordinates.
    pub ks: f64,
}

/// Aggregate over the successful replicates of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub model: Model,
    pub prior_setup: PriorSetup,
    pub n: usize,
    pub replicates: usize,
    pub failed: usize,
    /// √(mean ‖θ̂ − θ₀‖²)
    pub rmse_theta: f64,
    /// √(mean ‖η̂ − η₀‖²_n)
    pub rmse_eta: f64,
    pub se: f64,
    pub cr95: f64,
    pub ks_median: f64,
    pub outcomes: Vec<ReplicateOutcome>,
}

fn fit(model: Model, data: &Dataset, prior: &PriorSpec, mcmc: &McmcConfig) -> Result<McmcTrace> {
    if model.is_binary() {
        fit_gplm_logistic(data, prior, mcmc)
    } else {
        fit_plm(data, prior, mcmc)
    }
}

/// Runs replicate `r` of `cfg`. The data come from a ChaCha8 stream seeded
/// with `seed + r`; the chain seed is the next value of that stream.
pub fn run_replicate(cfg: &ExperimentConfig, r: usize) -> Result<ReplicateOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
    let data = generate_with_noise(cfg.model, cfg.n, cfg.noise_sd(), &mut rng)?;
    let prior = cfg
        .prior_setup
        .build(cfg.model, &data, cfg.noise_sd(), cfg.direction_bandwidth)?;
    let mcmc = McmcConfig {
        seed: rng.next_u64(),
        ..cfg.mcmc.clone()
    };
    let trace = fit(cfg.model, &data, &prior, &mcmc)?;
    let summary = summarize(&trace, &[])?;
    let truth = data.truth.as_ref().expect("generated data carry the truth");
    let oracle = if cfg.model.is_binary() {
        oracle_gplm_logistic(&data, &exact_direction(cfg.model, &data)?)?
    } else {
        oracle_plm(&data)?
    };
    let ks = bvm_distance(&trace, &oracle)?;

    let p = data.p();
    let diff = &summary.median - &truth.theta0;
    let eta_diff = trace.eta_posterior_mean() - &truth.eta0;
    Ok(ReplicateOutcome {
        replicate: r,
        theta_hat: summary.median.iter().copied().collect(),
        sq_err_theta: diff.norm_squared(),
        err_eta: (eta_diff.norm_squared() / data.n() as f64).sqrt(),
        se: summary.se.mean(),
        covers: (0..p).all(|s| summary.covers(s, truth.theta0[s])),
        ks: ks.iter().sum::<f64>() / p as f64,
    })
}

/// Worker count: explicit value, else `SEMIBVM_THREADS`, else rayon's default.
pub fn resolve_threads(explicit: Option<usize>) -> Result<usize> {
    if let Some(t) = explicit {
        return if t == 0 {
            Err(Error::invalid("thread count must be positive"))
        } else {
            Ok(t)
        };
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(t),
            _ => Err(Error::invalid(format!("{THREADS_ENV} must be a positive integer, got {s:?}"))),
        },
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_threads(threads)?)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len();
    if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}

/// Aggregates outcomes, in replicate order, into a report.
pub fn aggregate(cfg: &ExperimentConfig, results: Vec<Result<ReplicateOutcome>>) -> Result<ReplicateReport> {
    let total = results.len();
    let mut outcomes = Vec::with_capacity(total);
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(o) => outcomes.push(o),
            Err(e) => warn!(
                "{} {} n={} replicate {r} failed: {e}",
                cfg.model, cfg.prior_setup, cfg.n
            ),
        }
    }
    let failed = total - outcomes.len();
    if outcomes.is_empty() || failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::ExperimentFailed { failed, total });
    }
    let k = outcomes.len() as f64;
    let mean = |f: &dyn Fn(&ReplicateOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / k;
    Ok(ReplicateReport {
        model: cfg.model,
        prior_setup: cfg.prior_setup,
        n: cfg.n,
        replicates: outcomes.len(),
        failed,
        rmse_theta: mean(&|o| o.sq_err_theta).sqrt(),
        rmse_eta: mean(&|o| o.err_eta * o.err_eta).sqrt(),
        se: mean(&|o| o.se),
        cr95: mean(&|o| if o.covers { 1.0 } else { 0.0 }),
        ks_median: median(outcomes.iter().map(|o| o.ks).collect()),
        outcomes,
    })
}

/// Runs every replicate of `cfg` on a bounded pool. Results do not depend on
/// the number of workers.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ReplicateReport> {
    cfg.validate()?;
    let results = pool(cfg.threads)?.install(|| {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|r| run_replicate(cfg, r))
            .collect::<Vec<_>>()
    });
    let report = aggregate(cfg, results)?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        emit_report(std::slice::from_ref(&report), ReportFormat::Csv, &dir.join("report.csv"))?;
        emit_report(std::slice::from_ref(&report), ReportFormat::Markdown, &dir.join("report.md"))?;
    }
    Ok(report)
}

/// Reference table layouts: table 1 covers M1 and M2, table 2 M3 and M4.
pub fn table_models(table: u8) -> Result<[Model; 2]> {
    match table {
        1 => Ok([Model::M1, Model::M2]),
        2 => Ok([Model::M3, Model::M4]),
        _ => Err(Error::invalid(format!("no table {table}; expected 1 or 2"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub table: u8,
    pub replicates: usize,
    pub mcmc: McmcConfig,
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub direction_bandwidth: DirectionBandwidth,
}

fn default_sizes() -> Vec<usize> {
    TABLE_SIZES.to_vec()
}

impl TableConfig {
    /// 50 replicates of 4000 iterations (2000 burn-in), or 100 of 10000
    /// (5000 burn-in) at paper scale.
    pub fn new(table: u8, paper_scale: bool, seed: u64) -> Self {
        let (replicates, iterations, burn_in) = if paper_scale {
            (100, 10_000, 5_000)
        } else {
            (50, 4_000, 2_000)
        };
        Self {
            table,
            replicates,
            mcmc: McmcConfig {
                iterations,
                burn_in,
                ..McmcConfig::default()
            },
            seed,
            threads: None,
            sizes: default_sizes(),
            direction_bandwidth: DirectionBandwidth::default(),
        }
    }

    /// Cells in table order: n, then model, then prior setup.
    pub fn cells(&self) -> Result<Vec<ExperimentConfig>> {
        let models = table_models(self.table)?;
        let mut cells = Vec::new();
        for &n in &self.sizes {
            for model in models {
                for prior in PriorSetup::ALL {
                    let mut cfg = ExperimentConfig::new(model, prior, n, self.replicates, self.mcmc.clone());
                    cfg.seed = self.seed;
                    cfg.threads = self.threads;
                    cfg.direction_bandwidth = self.direction_bandwidth;
                    cells.push(cfg);
                }
            }
        }
        Ok(cells)
    }
}

/// Runs every cell of a reference table. All replicates of all cells share
/// one pool.
pub fn reproduce_table(cfg: &TableConfig) -> Result<Vec<ReplicateReport>> {
    let cells = cfg.cells()?;
    for c in &cells {
        c.validate()?;
    }
    let jobs: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(c, cell)| (0..cell.replicates).map(move |r| (c, r)))
        .collect();
    let mut results = pool(cfg.threads)?.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| run_replicate(&cells[c], r))
            .collect::<Vec<_>>()
    });
    let mut reports = Vec::with_capacity(cells.len());
    for cell in cells.iter().rev() {
        let tail = results.split_off(results.len() - cell.replicates);
        reports.push(aggregate(cell, tail)?);
    }
    reports.reverse();
    Ok(reports)
}
