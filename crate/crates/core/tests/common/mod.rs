#![allow(dead_code)]

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Effective sample size by Geyer's initial positive sequence.
pub fn ess(x: &[f64]) -> f64 {
    let n = x.len();
    let m = mean(x);
    let c0 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return n as f64;
    }
    let rho = |k: usize| -> f64 {
        (0..n - k).map(|i| (x[i] - m) * (x[i + k] - m)).sum::<f64>() / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = rho(k) + rho(k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    n as f64 / tau.max(1.0)
}

/// Monte Carlo standard error of the mean.
pub fn mcse(x: &[f64]) -> f64 {
    (variance(x) / ess(x)).sqrt()
}
