//! Blocked Gibbs sampler for Y = Xθ + ξ(V) + w with the GP nuisance
//! integrated out of the θ and bandwidth updates.
//!
//! Every quantity the θ and a updates need is a function of the bandwidth
//! only (Σₐ = Kₐ + σ²I is fixed once a is), so they are computed once per
//! visited a and reused. Nuisance paths are drawn after the chain, grouped by
//! bandwidth, each from its own pre-drawn seed.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::rc::Rc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::{BandwidthWalk, McmcConfig, McmcTrace};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{
    bandwidth_nonadaptive, kernel_from_sq_dists, squared_distances, standard_normal_vector,
    GramMatrix, KernelConfig, DEFAULT_JITTER,
};
use crate::linalg::{symmetrize, Cholesky};
use crate::priors::{BandwidthPrior, PriorSpec, PriorStructure};

/// Smoothness used for the starting bandwidth n^{1/(2·2+d)}.
const INIT_SMOOTHNESS: f64 = 2.0;

struct Design<'a> {
    /// U, or U + ĥ(V) under the dependent prior.
    x: DMatrix<f64>,
    y: &'a DVector<f64>,
    d2: DMatrix<f64>,
    shift: Option<&'a DMatrix<f64>>,
}

impl<'a> Design<'a> {
    fn new(data: &'a Dataset, prior: &'a PriorSpec) -> Result<Self> {
        let (x, shift) = match &prior.structure {
            PriorStructure::Independent => (data.u.clone(), None),
            PriorStructure::Dependent(lfd) => (&data.u + &lfd.at_design, Some(&lfd.at_design)),
        };
        Ok(Self {
            x,
            y: &data.y,
            d2: squared_distances(&data.v)?,
            shift,
        })
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn factor(&self, a: f64, sigma2: f64) -> Result<Factors> {
        let cfg = KernelConfig::squared_exponential(a)?;
        let gram = GramMatrix::from_kernel_values(kernel_from_sq_dists(&self.d2, &cfg), DEFAULT_JITTER)?;
        let mut sigma = gram.values().clone();
        for i in 0..self.n() {
            sigma[(i, i)] += sigma2;
        }
        let sigma = Cholesky::new(sigma).ok_or_else(|| {
            Error::numerical(format!("K + σ²I not positive definite at a = {a}"))
        })?;
        Ok(Factors { gram, sigma })
    }

    /// Factor of Σ alone, which is all the θ and a updates need.
    fn sigma_factor(&self, a: f64, sigma2: f64) -> Result<Cholesky> {
        let cfg = KernelConfig::squared_exponential(a)?;
        let mut sigma = kernel_from_sq_dists(&self.d2, &cfg);
        for i in 0..self.n() {
            sigma[(i, i)] += DEFAULT_JITTER + sigma2;
        }
        Cholesky::new(sigma)
            .ok_or_else(|| Error::numerical(format!("K + σ²I not positive definite at a = {a}")))
    }

    fn stats(&self, sigma: &Cholesky) -> BandwidthStats {
        let si_x = sigma.solve_mat(&self.x);
        let si_y = sigma.solve(self.y);
        let mut xt_si_x = self.x.transpose() * &si_x;
        symmetrize(&mut xt_si_x);
        BandwidthStats {
            log_det: sigma.ln_det(),
            xt_si_y: self.x.transpose() * &si_y,
            yt_si_y: self.y.dot(&si_y),
            xt_si_x,
        }
    }

    fn eta_from_xi(&self, xi: DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        match self.shift {
            Some(h) => xi + h * theta,
            None => xi,
        }
    }
}

struct Factors {
    /// K̃ = Kₐ + jitter·I
    gram: GramMatrix,
    /// Σ = K̃ + σ²I
    sigma: Cholesky,
}

struct BandwidthStats {
    log_det: f64,
    xt_si_x: DMatrix<f64>,
    xt_si_y: DVector<f64>,
    yt_si_y: f64,
}

impl BandwidthStats {
    /// log N(Y; Xθ, Σₐ)
    fn log_lik(&self, theta: &DVector<f64>, n: usize) -> f64 {
        let quad = self.yt_si_y - 2.0 * theta.dot(&self.xt_si_y) + theta.dot(&(&self.xt_si_x * theta));
        -0.5 * (n as f64 * (2.0 * PI).ln() + self.log_det + quad)
    }

    /// Mean and precision Cholesky of θ | a, Y.
    fn theta_conditional(&self, phi0: f64) -> Result<(DVector<f64>, Cholesky)> {
        let p = self.xt_si_x.nrows();
        let prec = &self.xt_si_x + DMatrix::identity(p, p) * phi0;
        let chol = Cholesky::new(prec)
            .ok_or_else(|| Error::numerical("θ posterior precision not positive definite"))?;
        let mean = chol.solve(&self.xt_si_y);
        Ok((mean, chol))
    }

    fn draw_theta<R: Rng + ?Sized>(&self, phi0: f64, rng: &mut R) -> Result<DVector<f64>> {
        let (mean, chol) = self.theta_conditional(phi0)?;
        let mut z = standard_normal_vector(mean.len(), rng);
        chol.l().tr_solve_lower_triangular_mut(&mut z);
        Ok(mean + z)
    }
}

/// ξ | θ, a, Y by Matheron's rule: with f ~ N(0, K̃) and e ~ N(0, σ²I),
/// ξ = f + K̃Σ⁻¹(r − f − e) = r − e − σ²Σ⁻¹(r − f − e).
fn draw_xi<R: Rng + ?Sized>(
    factors: &Factors,
    resid: &DVector<f64>,
    sigma2: f64,
    rng: &mut R,
) -> DVector<f64> {
    let n = resid.len();
    let f = factors.gram.chol().mul_l(&standard_normal_vector(n, rng));
    let e = standard_normal_vector(n, rng) * sigma2.sqrt();
    let v = resid - &f - &e;
    resid - e - factors.sigma.solve(&v) * sigma2
}

/// Closed-form θ | a, Y ~ N(mean, cov) with the nuisance integrated out.
pub fn conjugate_theta_posterior(
    data: &Dataset,
    prior: &PriorSpec,
    a: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    data.validate()?;
    prior.check_dims(data.n(), data.p())?;
    let design = Design::new(data, prior)?;
    let stats = design.stats(&design.sigma_factor(a, prior.noise_sd * prior.noise_sd)?);
    let (mean, chol) = stats.theta_conditional(prior.theta_precision)?;
    let p = mean.len();
    Ok((mean, chol.solve_mat(&DMatrix::identity(p, p))))
}

/// Gibbs sampler for the Gaussian partially linear model.
///
/// Each iteration: (1) a random-walk Metropolis move on log a against
/// p(Y | θ, a) with ξ integrated out (adaptive priors only), (2) θ from its
/// Gaussian conditional, (3) ξ from its Gaussian conditional; under the
/// dependent prior the reported η is ξ + ĥ(V)θ. With `noise_update` set, σ²
/// is then drawn from its inverse-gamma conditional.
pub fn fit_plm(data: &Dataset, prior: &PriorSpec, mcmc: &McmcConfig) -> Result<McmcTrace> {
    data.validate()?;
    mcmc.validate()?;
    prior.check_dims(data.n(), data.p())?;
    let design = Design::new(data, prior)?;
    let (n, p) = (data.n(), data.p());
    let walk = BandwidthWalk::new(prior, mcmc, data.d());
    let mut a = match (prior.bandwidth, &walk) {
        (BandwidthPrior::Fixed { inverse_bandwidth }, _) => inverse_bandwidth,
        (_, Some(w)) => w.snap(bandwidth_nonadaptive(n, INIT_SMOOTHNESS, data.d())?),
        _ => unreachable!("adaptive prior always yields a walk"),
    };
    let phi0 = prior.theta_precision;
    let mut sigma2 = prior.noise_sd * prior.noise_sd;
    let mut rng = ChaCha8Rng::seed_from_u64(mcmc.seed);

    let kept = mcmc.kept();
    let mut theta_draws = DMatrix::zeros(kept, p);
    let mut eta_draws = DMatrix::zeros(kept, n);
    let mut a_draws = DVector::zeros(kept);
    let mut eta_seeds = Vec::with_capacity(kept);
    let mut noise_draws = prior.noise_update.map(|_| DVector::zeros(kept));

    let mut cache: HashMap<u64, Rc<BandwidthStats>> = HashMap::new();
    let stats_for = |a: f64, sigma2: f64, cache: &mut HashMap<u64, Rc<BandwidthStats>>| -> Result<Rc<BandwidthStats>> {
        if let Some(s) = cache.get(&a.to_bits()) {
            return Ok(Rc::clone(s));
        }
        let s = Rc::new(design.stats(&design.sigma_factor(a, sigma2)?));
        cache.insert(a.to_bits(), Rc::clone(&s));
        Ok(s)
    };

    let mut theta = mcmc.initial_theta(p)?;
    let mut current = stats_for(a, sigma2, &mut cache)?;
    let mut log_prior_a = match &walk {
        Some(w) => w.log_prior(a)?,
        None => 0.0,
    };
    let (mut accepted, mut proposed) = (0usize, 0usize);

    for it in 0..mcmc.iterations {
        if let Some(w) = &walk {
            proposed += 1;
            let prop = w.propose(a, &mut rng);
            let lp_prop = w.log_prior(prop)?;
            let u: f64 = rng.random();
            if lp_prop.is_finite() {
                let cand = stats_for(prop, sigma2, &mut cache).map_err(|e| e.at_iteration(it))?;
                let log_ratio =
                    cand.log_lik(&theta, n) + lp_prop - current.log_lik(&theta, n) - log_prior_a;
                if !log_ratio.is_finite() {
                    return Err(Error::numerical("non-finite likelihood ratio").at_iteration(it));
                }
                if u.ln() < log_ratio {
                    a = prop;
                    current = cand;
                    log_prior_a = lp_prop;
                    accepted += 1;
                }
            }
        }

        theta = current.draw_theta(phi0, &mut rng).map_err(|e| e.at_iteration(it))?;
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical("non-finite θ draw").at_iteration(it));
        }

        let slot = it.checked_sub(mcmc.burn_in);
        if let Some(noise) = prior.noise_update {
            // σ² needs ξ, so the nuisance is drawn inside the chain here.
            let factors = design.factor(a, sigma2).map_err(|e| e.at_iteration(it))?;
            let resid = design.y - &design.x * &theta;
            let xi = draw_xi(&factors, &resid, sigma2, &mut rng);
            let sse = (&resid - &xi).norm_squared();
            let shape = noise.shape + 0.5 * n as f64;
            let rate = noise.scale + 0.5 * sse;
            let g = Gamma::new(shape, 1.0 / rate)
                .map_err(|e| Error::numerical(format!("noise update: {e}")).at_iteration(it))?;
            sigma2 = 1.0 / g.sample(&mut rng);
            if let Some(t) = slot {
                eta_draws.set_row(t, &design.eta_from_xi(xi, &theta).transpose());
                if let Some(nd) = noise_draws.as_mut() {
                    nd[t] = sigma2.sqrt();
                }
            }
            cache.clear();
            current = stats_for(a, sigma2, &mut cache).map_err(|e| e.at_iteration(it))?;
        } else if slot.is_some() {
            eta_seeds.push(rng.next_u64());
        }

        if let Some(t) = slot {
            theta_draws.set_row(t, &theta.transpose());
            a_draws[t] = a;
        }
    }

    if prior.noise_update.is_none() {
        let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for t in 0..kept {
            groups.entry(a_draws[t].to_bits()).or_default().push(t);
        }
        for (bits, rows) in groups {
            let factors = design.factor(f64::from_bits(bits), sigma2)?;
            for t in rows {
                let theta_t: DVector<f64> = theta_draws.row(t).transpose();
                let resid = design.y - &design.x * &theta_t;
                let mut eta_rng = ChaCha8Rng::seed_from_u64(eta_seeds[t]);
                let xi = draw_xi(&factors, &resid, sigma2, &mut eta_rng);
                eta_draws.set_row(t, &design.eta_from_xi(xi, &theta_t).transpose());
            }
        }
    }

    let trace = McmcTrace {
        theta: theta_draws,
        eta_at_design: eta_draws,
        a: a_draws,
        accept_rate_a: if proposed == 0 {
            0.0
        } else {
            accepted as f64 / proposed as f64
        },
        accept_rate_theta: None,
        noise_sd: noise_draws,
    };
    trace.validate()?;
    Ok(trace)
}
