//! Metropolis-within-Gibbs for the partially linear logistic model
//! logit P(Y = 1) = Xθ + ξ(V), ξ ~ GP(0, Kₐ).

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;
use std::rc::Rc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BandwidthWalk, McmcConfig, McmcTrace};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{
    bandwidth_nonadaptive, kernel_from_sq_dists, squared_distances, standard_normal_vector,
    GramMatrix, KernelConfig, DEFAULT_JITTER,
};
use crate::linalg::Cholesky;
use crate::priors::{BandwidthPrior, PriorSpec, PriorStructure};

const INIT_SMOOTHNESS: f64 = 2.0;
const INIT_THETA_STEP: f64 = 0.1;
const ADAPT_WINDOW: usize = 50;
const TARGET_ACCEPT: (f64, f64) = (0.25, 0.40);
/// Memory budget for cached Gram factors (one n×n matrix each).
const CACHE_BYTES: usize = 384 << 20;
const MAX_SLICE_SHRINKS: usize = 10_000;

/// One elliptical slice sampling update of `current` under the prior
/// N(0, LLᵀ) and the log-likelihood `log_lik`.
pub fn elliptical_slice_step<R, F>(
    current: &DVector<f64>,
    prior_chol: &Cholesky,
    log_lik: F,
    rng: &mut R,
) -> DVector<f64>
where
    R: Rng + ?Sized,
    F: Fn(&DVector<f64>) -> f64,
{
    let nu = prior_chol.mul_l(&standard_normal_vector(current.len(), rng));
    let u: f64 = rng.random();
    let threshold = log_lik(current) + u.ln();
    let mut angle = rng.random::<f64>() * 2.0 * PI;
    let (mut lo, mut hi) = (angle - 2.0 * PI, angle);
    for _ in 0..MAX_SLICE_SHRINKS {
        let cand = current * angle.cos() + &nu * angle.sin();
        if log_lik(&cand) > threshold {
            return cand;
        }
        if angle < 0.0 {
            lo = angle;
        } else {
            hi = angle;
        }
        angle = lo + rng.random::<f64>() * (hi - lo);
    }
    current.clone()
}

/// Σᵢ yᵢgᵢ − log(1 + e^{gᵢ})
pub(crate) fn bernoulli_log_lik(y: &DVector<f64>, logits: &DVector<f64>) -> f64 {
    y.iter()
        .zip(logits.iter())
        .map(|(y, g)| y * g - softplus(*g))
        .sum()
}

fn softplus(g: f64) -> f64 {
    g.max(0.0) + (-g.abs()).exp().ln_1p()
}

struct GramCache {
    d2: DMatrix<f64>,
    capacity: usize,
    map: HashMap<u64, Rc<Cholesky>>,
    order: VecDeque<u64>,
}

impl GramCache {
    fn new(d2: DMatrix<f64>) -> Self {
        let n = d2.nrows().max(1);
        let capacity = (CACHE_BYTES / (8 * n * n)).max(2);
        Self {
            d2,
            capacity,
            map: HashMap::new(),
            order: VecDeque::new(),
        }
    }

    /// Jittered Cholesky factor of Kₐ at the design points.
    fn get(&mut self, a: f64) -> Result<Rc<Cholesky>> {
        let key = a.to_bits();
        if let Some(g) = self.map.get(&key) {
            return Ok(Rc::clone(g));
        }
        let cfg = KernelConfig::squared_exponential(a)?;
        let gram = GramMatrix::from_kernel_values(kernel_from_sq_dists(&self.d2, &cfg), DEFAULT_JITTER)?;
        let g = Rc::new(gram.chol().clone());
        if self.order.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.map.remove(&old);
            }
        }
        self.order.push_back(key);
        self.map.insert(key, Rc::clone(&g));
        Ok(g)
    }
}

fn log_prior_theta(theta: &DVector<f64>, phi0: f64) -> f64 {
    -0.5 * phi0 * theta.norm_squared()
}

/// Sampler for binary responses. Per iteration: elliptical slice update of
/// ξ, random-walk Metropolis on θ (step size tuned during burn-in only), and
/// for adaptive priors a whitened move on a that maps ξ through
/// ξ′ = L_{a′} L_a⁻¹ ξ.
pub fn fit_gplm_logistic(data: &Dataset, prior: &PriorSpec, mcmc: &McmcConfig) -> Result<McmcTrace> {
    data.validate()?;
    mcmc.validate()?;
    if !data.is_binary() {
        return Err(Error::invalid("logistic model needs responses in {0, 1}"));
    }
    prior.check_dims(data.n(), data.p())?;
    let (n, p) = (data.n(), data.p());
    let (x, shift) = match &prior.structure {
        PriorStructure::Independent => (data.u.clone(), None),
        PriorStructure::Dependent(lfd) => (&data.u + &lfd.at_design, Some(&lfd.at_design)),
    };
    let y = &data.y;
    let phi0 = prior.theta_precision;
    let walk = BandwidthWalk::new(prior, mcmc, data.d());
    let mut a = match (prior.bandwidth, &walk) {
        (BandwidthPrior::Fixed { inverse_bandwidth }, _) => inverse_bandwidth,
        (_, Some(w)) => w.snap(bandwidth_nonadaptive(n, INIT_SMOOTHNESS, data.d())?),
        _ => unreachable!("adaptive prior always yields a walk"),
    };
    let mut cache = GramCache::new(squared_distances(&data.v)?);
    let mut rng = ChaCha8Rng::seed_from_u64(mcmc.seed);

    let mut theta = mcmc.initial_theta(p)?;
    let mut xi = DVector::zeros(n);
    let mut gram = cache.get(a)?;
    let mut log_prior_a = match &walk {
        Some(w) => w.log_prior(a)?,
        None => 0.0,
    };
    let mut step = INIT_THETA_STEP / (p as f64).sqrt();

    let kept = mcmc.kept();
    let mut theta_draws = DMatrix::zeros(kept, p);
    let mut eta_draws = DMatrix::zeros(kept, n);
    let mut a_draws = DVector::zeros(kept);
    let (mut a_acc, mut a_prop) = (0usize, 0usize);
    let (mut window_acc, mut kept_theta_acc) = (0usize, 0usize);

    for it in 0..mcmc.iterations {
        // (1) latent GP values
        let offset = &x * &theta;
        xi = elliptical_slice_step(
            &xi,
            &gram,
            |cand| bernoulli_log_lik(y, &(&offset + cand)),
            &mut rng,
        );

        // (2) θ
        let mut cur_ll = bernoulli_log_lik(y, &(&offset + &xi));
        let prop = &theta + standard_normal_vector(p, &mut rng) * step;
        let prop_ll = bernoulli_log_lik(y, &(&x * &prop + &xi));
        let log_ratio = prop_ll + log_prior_theta(&prop, phi0) - cur_ll - log_prior_theta(&theta, phi0);
        if !log_ratio.is_finite() {
            return Err(Error::numerical("non-finite θ acceptance ratio").at_iteration(it));
        }
        let u: f64 = rng.random();
        let theta_accepted = u.ln() < log_ratio;
        if theta_accepted {
            theta = prop;
            cur_ll = prop_ll;
            window_acc += 1;
            if it >= mcmc.burn_in {
                kept_theta_acc += 1;
            }
        }
        if it < mcmc.burn_in && (it + 1) % ADAPT_WINDOW == 0 {
            let rate = window_acc as f64 / ADAPT_WINDOW as f64;
            if rate < TARGET_ACCEPT.0 {
                step *= 0.8;
            } else if rate > TARGET_ACCEPT.1 {
                step *= 1.25;
            }
            window_acc = 0;
        }

        // (3) bandwidth, moving ξ along with it in whitened coordinates
        if let Some(w) = &walk {
            a_prop += 1;
            let a_new = w.propose(a, &mut rng);
            let lp_new = w.log_prior(a_new)?;
            let u: f64 = rng.random();
            if lp_new.is_finite() {
                let gram_new = cache.get(a_new).map_err(|e| e.at_iteration(it))?;
                let white = gram.solve_lower(&xi);
                let xi_new = gram_new.mul_l(&white);
                let new_ll = bernoulli_log_lik(y, &(&x * &theta + &xi_new));
                let log_ratio = new_ll + lp_new - cur_ll - log_prior_a;
                if !log_ratio.is_finite() {
                    return Err(Error::numerical("non-finite bandwidth acceptance ratio").at_iteration(it));
                }
                if u.ln() < log_ratio {
                    a = a_new;
                    gram = gram_new;
                    xi = xi_new;
                    log_prior_a = lp_new;
                    a_acc += 1;
                }
            }
        }

        if let Some(t) = it.checked_sub(mcmc.burn_in) {
            theta_draws.set_row(t, &theta.transpose());
            let eta = match shift {
                Some(h) => &xi + h * &theta,
                None => xi.clone(),
            };
            eta_draws.set_row(t, &eta.transpose());
            a_draws[t] = a;
        }
    }

    let trace = McmcTrace {
        theta: theta_draws,
        eta_at_design: eta_draws,
        a: a_draws,
        accept_rate_a: if a_prop == 0 {
            0.0
        } else {
            a_acc as f64 / a_prop as f64
        },
        accept_rate_theta: Some(kept_theta_acc as f64 / kept as f64),
        noise_sd: None,
    };
    trace.validate()?;
    Ok(trace)
}
