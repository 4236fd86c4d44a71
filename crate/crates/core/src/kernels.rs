//! Squared-exponential Gaussian-process kernels, Gram matrices and path
//! samplers, including the Riemann–Liouville process with a random
//! quadratic drift.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// Jitter added to the Gram diagonal on the first factorization attempt.
pub const DEFAULT_JITTER: f64 = 1e-8;
/// Largest jitter tried before giving up.
pub const MAX_JITTER: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseKernel {
    /// K₀(x, y) = exp(−|x − y|²)
    SquaredExponential,
}

/// Base kernel rescaled by an inverse bandwidth: K^a(x, y) = K₀(ax, ay).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub base: BaseKernel,
    pub inverse_bandwidth: f64,
}

impl KernelConfig {
    pub fn squared_exponential(inverse_bandwidth: f64) -> Result<Self> {
        if !(inverse_bandwidth > 0.0 && inverse_bandwidth.is_finite()) {
            return Err(Error::invalid(format!(
                "inverse bandwidth must be positive and finite, got {inverse_bandwidth}"
            )));
        }
        Ok(Self {
            base: BaseKernel::SquaredExponential,
            inverse_bandwidth,
        })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        self.eval_sq_dist(d2)
    }

    #[inline]
    pub fn eval_sq_dist(&self, d2: f64) -> f64 {
        match self.base {
            BaseKernel::SquaredExponential => {
                let a = self.inverse_bandwidth;
                (-a * a * d2).exp()
            }
        }
    }
}

/// Kernel matrix at a fixed set of points, with its jittered Cholesky factor.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    values: DMatrix<f64>,
    jitter: f64,
    chol: Cholesky,
}

impl GramMatrix {
    /// Kernel values with the jitter already on the diagonal.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn chol(&self) -> &Cholesky {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Factors `kernel + jitter·I`, doubling the jitter from `start_jitter`
    /// until the factorization succeeds or `MAX_JITTER` is exceeded.
    pub fn from_kernel_values(kernel: DMatrix<f64>, start_jitter: f64) -> Result<Self> {
        let n = kernel.nrows();
        let mut jitter = start_jitter.max(0.0);
        loop {
            let mut values = kernel.clone();
            for i in 0..n {
                values[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(values.clone()) {
                return Ok(Self {
                    values,
                    jitter,
                    chol,
                });
            }
            if jitter == 0.0 {
                jitter = DEFAULT_JITTER;
                continue;
            }
            jitter *= 2.0;
            if jitter > MAX_JITTER {
                return Err(Error::numerical(format!(
                    "gram matrix ({n}×{n}) not positive definite with jitter up to {MAX_JITTER:e}"
                )));
            }
        }
    }
}

/// Pairwise squared Euclidean distances between the rows of `points`.
pub fn squared_distances(points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_points(points)?;
    let n = points.nrows();
    let mut d2 = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let mut s = 0.0;
            for k in 0..points.ncols() {
                let diff = points[(i, k)] - points[(j, k)];
                s += diff * diff;
            }
            d2[(i, j)] = s;
            d2[(j, i)] = s;
        }
    }
    Ok(d2)
}

/// Kernel values from precomputed squared distances, without jitter.
pub fn kernel_from_sq_dists(d2: &DMatrix<f64>, cfg: &KernelConfig) -> DMatrix<f64> {
    let n = d2.nrows();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = 1.0;
        for i in (j + 1)..n {
            let v = cfg.eval_sq_dist(d2[(i, j)]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn check_points(points: &DMatrix<f64>) -> Result<()> {
    if points.nrows() == 0 {
        return Err(Error::invalid("at least one point is required"));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("points contain non-finite coordinates"));
    }
    Ok(())
}

/// Gram matrix of K^a at the rows of `points` (n×d), default jitter.
pub fn gram(points: &DMatrix<f64>, cfg: &KernelConfig) -> Result<GramMatrix> {
    gram_with_jitter(points, cfg, DEFAULT_JITTER)
}

pub fn gram_with_jitter(
    points: &DMatrix<f64>,
    cfg: &KernelConfig,
    jitter: f64,
) -> Result<GramMatrix> {
    let d2 = squared_distances(points)?;
    GramMatrix::from_kernel_values(kernel_from_sq_dists(&d2, cfg), jitter)
}

/// Non-adaptive inverse bandwidth a_n = n^{1/(2α+d)}.
pub fn bandwidth_nonadaptive(n: usize, alpha: f64, d: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("smoothness must be positive, got {alpha}")));
    }
    if d == 0 {
        return Err(Error::invalid("covariate dimension must be at least 1"));
    }
    Ok((n as f64).powf(1.0 / (2.0 * alpha + d as f64)))
}

pub fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// One draw from N(mean, gram).
pub fn sample_gp_path<R: Rng + ?Sized>(
    gram: &GramMatrix,
    mean: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if mean.len() != gram.dim() {
        return Err(Error::invalid(format!(
            "mean has length {} but gram is {}×{}",
            mean.len(),
            gram.dim(),
            gram.dim()
        )));
    }
    let z = standard_normal_vector(gram.dim(), rng);
    Ok(mean + gram.chol().mul_l(&z))
}

/// Default number of sub-steps per grid interval for the stochastic integral.
pub const RL_DEFAULT_REFINEMENT: usize = 10;

/// A sampled path on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RLPath {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// Samples r(t) = ∫₀ᵗ (t−u)^{1/2} dW_u + Z₀ + Z₁t + Z₂t² at each grid point.
pub fn sample_riemann_liouville<R: Rng + ?Sized>(grid: &[f64], rng: &mut R) -> Result<RLPath> {
    sample_riemann_liouville_refined(grid, RL_DEFAULT_REFINEMENT, rng)
}

/// As [`sample_riemann_liouville`], with an explicit refinement factor.
///
/// The integral uses left endpoints on a grid that splits [0, t₁] and every
/// [tᵢ, tᵢ₊₁] into `refinement` equal pieces, so each grid point is also a
/// node of the fine grid.
pub fn sample_riemann_liouville_refined<R: Rng + ?Sized>(
    grid: &[f64],
    refinement: usize,
    rng: &mut R,
) -> Result<RLPath> {
    if grid.len() < 2 {
        return Err(Error::invalid("time grid needs at least two points"));
    }
    if refinement == 0 {
        return Err(Error::invalid("refinement factor must be at least 1"));
    }
    if grid.iter().any(|t| !t.is_finite()) || grid[0] < 0.0 {
        return Err(Error::invalid("time grid must be finite and non-negative"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("time grid must be strictly increasing"));
    }

    // Fine nodes and Brownian increments over [node_j, node_{j+1}).
    let mut nodes = Vec::with_capacity(grid.len() * refinement + 1);
    nodes.push(0.0);
    let mut grid_node = Vec::with_capacity(grid.len());
    let mut left = 0.0;
    for &t in grid {
        if t > left {
            let h = (t - left) / refinement as f64;
            for k in 1..refinement {
                nodes.push(left + h * k as f64);
            }
            nodes.push(t);
        }
        grid_node.push(nodes.len() - 1);
        left = t;
    }
    let increments: Vec<f64> = nodes
        .windows(2)
        .map(|w| {
            let z: f64 = rng.sample(StandardNormal);
            z * (w[1] - w[0]).sqrt()
        })
        .collect();
    let z: [f64; 3] = [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ];

    let values = grid
        .iter()
        .zip(&grid_node)
        .map(|(&t, &last)| {
            let integral: f64 = (0..last)
                .map(|j| (t - nodes[j]).sqrt() * increments[j])
                .sum();
            integral + z[0] + z[1] * t + z[2] * t * t
        })
        .collect();
    Ok(RLPath {
        grid: grid.to_vec(),
        values,
    })
}
