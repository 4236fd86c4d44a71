//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use semibvm::harness::{
    generate, render_report, reproduce_table, run_experiment, ExperimentConfig, Model, PriorSetup,
    ReplicateReport, ReportFormat, TableConfig,
};
use semibvm::kernels::{gram, sample_riemann_liouville, GramMatrix, KernelConfig};
use semibvm::linalg::Cholesky;
use semibvm::samplers::{conjugate_theta_posterior, elliptical_slice_step};
use semibvm::summaries::{ks_statistic, oracle_plm, summarize};
use semibvm::{fit_plm, BandwidthPrior, McmcConfig, McmcTrace, PriorSpec, PriorStructure};

const SEED: u64 = 7;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn find<'a>(reports: &'a [ReplicateReport], n: usize, model: Model, prior: PriorSetup) -> &'a ReplicateReport {
    reports
        .iter()
        .find(|r| r.n == n && r.model == model && r.prior_setup == prior)
        .expect("cell present")
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Effective sample size with Geyer's initial positive sequence.
fn ess(x: &[f64]) -> f64 {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let c0: f64 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    let rho = |k: usize| -> f64 {
        (0..n - k).map(|i| (x[i] - m) * (x[i + k] - m)).sum::<f64>() / n as f64 / c0
    };
    let mut tau = 1.0;
    let mut k = 1;
    while k + 1 < n {
        let pair = rho(k) + rho(k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    n as f64 / tau
}

/// Kolmogorov limiting p-value for √N·D.
fn ks_pvalue(d: f64, n: usize) -> f64 {
    let x = (n as f64).sqrt() * d;
    let s: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * x * x).exp()
        })
        .sum();
    s.clamp(0.0, 1.0)
}

fn std_normal_cdf(x: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal as SNormal};
    SNormal::new(0.0, 1.0).unwrap().cdf(x)
}

fn table_one() -> (Vec<ReplicateReport>, Outcome) {
    let t = Instant::now();
    let mut cfg = TableConfig::new(1, false, SEED);
    cfg.threads = Some(1);
    let reports = reproduce_table(&cfg).expect("table 1 in process");
    let in_process = render_report(&reports, ReportFormat::Csv).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_semibvm"))
        .args(["reproduce-table", "--table", "1", "--seed", &SEED.to_string(), "--out"])
        .arg(dir.path())
        .env("SEMIBVM_THREADS", "3")
        .status()
        .expect("run semibvm");
    let from_cli = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap_or_default();
    let same = status.success() && from_cli.as_bytes() == in_process.as_bytes();
    println!("{in_process}");
    (
        reports,
        Outcome {
            name: "8 determinism (in-process 1 thread vs CLI 3 threads, table 1)",
            pass: same,
            detail: format!(
                "exit {:?}, {} vs {} bytes, {:.0}s",
                status.code(),
                in_process.len(),
                from_cli.len(),
                t.elapsed().as_secs_f64()
            ),
        },
    )
}

fn criterion_1(reports: &[ReplicateReport]) -> Outcome {
    let r = find(reports, 400, Model::M1, PriorSetup::P2);
    Outcome {
        name: "1 M1/P2 n=400: RMSE(θ) in [0.021, 0.042], CR95 in [0.84, 1]",
        pass: (0.021..=0.042).contains(&r.rmse_theta) && (0.84..=1.0).contains(&r.cr95),
        detail: format!("RMSE(θ) {:.4}, CR95 {:.2}", r.rmse_theta, r.cr95),
    }
}

fn criterion_2(reports: &[ReplicateReport]) -> Outcome {
    let r = find(reports, 400, Model::M1, PriorSetup::P1);
    Outcome {
        name: "2 M1/P1 n=400: CR95 <= 0.60 and RMSE(θ) >= 0.08",
        pass: r.cr95 <= 0.60 && r.rmse_theta >= 0.08,
        detail: format!("RMSE(θ) {:.4}, CR95 {:.2}", r.rmse_theta, r.cr95),
    }
}

fn criterion_3() -> Outcome {
    let mut ratios = Vec::new();
    for n in [200, 400] {
        let mut rmse = Vec::new();
        for prior in [PriorSetup::P1, PriorSetup::P2] {
            let mut cfg = ExperimentConfig::new(Model::M3, prior, n, 50, TableConfig::new(2, false, SEED).mcmc);
            cfg.seed = SEED;
            rmse.push(run_experiment(&cfg).expect("M3 cell").rmse_theta);
        }
        ratios.push((n, rmse[0], rmse[1], rmse[0] / rmse[1]));
    }
    Outcome {
        name: "3 M3: RMSE(θ) P1/P2 >= 2.5 at n = 200, 400",
        pass: ratios.iter().all(|r| r.3 >= 2.5),
        detail: ratios
            .iter()
            .map(|(n, a, b, q)| format!("n={n}: {a:.3}/{b:.3} = {q:.2}"))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn criterion_4(reports: &[ReplicateReport]) -> Outcome {
    let eta: Vec<f64> = reports.iter().map(|r| r.rmse_eta).collect();
    let theta: Vec<f64> = reports.iter().map(|r| r.rmse_theta).collect();
    let rho = spearman(&eta, &theta);
    Outcome {
        name: "4 Spearman(RMSE(η), RMSE(θ)) over table-1 cells > 0.5",
        pass: rho > 0.5,
        detail: format!("rho {rho:.3} over {} cells", reports.len()),
    }
}

fn criterion_5(reports: &[ReplicateReport]) -> Outcome {
    let ks: Vec<f64> = [50, 100, 200, 400]
        .iter()
        .map(|&n| find(reports, n, Model::M1, PriorSetup::P2).ks_median)
        .collect();
    Outcome {
        name: "5 M1/P2 median KS strictly decreasing over n = 50..400",
        pass: ks.windows(2).all(|w| w[1] < w[0]),
        detail: format!("{ks:.4?}"),
    }
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let data = generate(Model::M1, 100, &mut ChaCha8Rng::seed_from_u64(SEED)).unwrap();
    let truth = data.truth.clone().unwrap();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for structure in [
        PriorStructure::Independent,
        PriorStructure::Dependent(semibvm::lfd::lfd_plm_analytic(
            |v| vec![Model::M1.cond_mean_u(v[0])],
            &data.v,
        )
        .unwrap()),
    ] {
        for a in [0.5, 1.0, 2.0, 5.0] {
            let prior = PriorSpec::new(structure.clone(), BandwidthPrior::Fixed { inverse_bandwidth: a }, truth.noise_sd)
                .unwrap();
            let (mean, cov) = conjugate_theta_posterior(&data, &prior, a).unwrap();
            let mcmc = McmcConfig {
                iterations: 22_000,
                burn_in: 2_000,
                seed: SEED + cases,
                ..McmcConfig::default()
            };
            let trace = fit_plm(&data, &prior, &mcmc).unwrap();
            let draws = trace.theta_column(0);
            let k = draws.len() as f64;
            let m = draws.iter().sum::<f64>() / k;
            let centred: Vec<f64> = draws.iter().map(|x| (x - m).powi(2)).collect();
            let var = centred.iter().sum::<f64>() / (k - 1.0);
            let e = ess(&draws);
            let mcse_mean = (var / e).sqrt();
            let sq_sd = {
                let mm = centred.iter().sum::<f64>() / k;
                (centred.iter().map(|c| (c - mm).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            };
            let mcse_var = sq_sd / ess(&centred).sqrt();
            let z_mean = (m - mean[0]).abs() / mcse_mean;
            let z_var = (var - cov[(0, 0)]).abs() / mcse_var;
            worst = worst.max(z_mean).max(z_var);
            cases += 1;
        }
    }
    Outcome {
        name: "6 fixed-a θ draws match the closed-form posterior within 3 MCSE (8 cases)",
        pass: worst < 3.0,
        detail: format!("worst |z| {worst:.2}, {:.1}s", t.elapsed().as_secs_f64()),
    }
}

fn property_gram() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for trial in 0..20 {
        let pts = DMatrix::from_fn(30, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = 0.2 + trial as f64 * 0.3;
        let cfg = KernelConfig::squared_exponential(a).unwrap();
        let raw = DMatrix::from_fn(30, 30, |i, j| {
            cfg.eval(&[pts[(i, 0)], pts[(i, 1)]], &[pts[(j, 0)], pts[(j, 1)]])
        });
        if (&raw - raw.transpose()).amax() > 0.0 {
            return Err("gram not symmetric".into());
        }
        let min_eig = raw.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-10 {
            return Err(format!("min eigenvalue {min_eig:e}"));
        }
        gram(&pts, &cfg).map_err(|e| e.to_string())?;
    }
    // Coincident points make the kernel singular; escalation must rescue it.
    let dup = DMatrix::from_element(5, 1, 0.3);
    let g = gram(&dup, &KernelConfig::squared_exponential(1.0).unwrap()).map_err(|e| e.to_string())?;
    if !(g.jitter() > 0.0) {
        return Err("no jitter on a singular kernel".into());
    }
    let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    if GramMatrix::from_kernel_values(indefinite, 1e-8).is_ok() {
        return Err("indefinite matrix accepted".into());
    }
    Ok(())
}

fn trace_of(draws: &[f64], n: usize) -> McmcTrace {
    let k = draws.len();
    McmcTrace {
        theta: DMatrix::from_column_slice(k, 1, draws),
        eta_at_design: DMatrix::zeros(k, n),
        a: DVector::from_element(k, 1.0),
        accept_rate_a: 0.0,
        accept_rate_theta: None,
        noise_sd: None,
    }
}

fn property_quantiles() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for _ in 0..50 {
        let k = rng.random_range(100..500);
        let draws: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let levels: Vec<f64> = (0..6).map(|_| rng.random_range(0.01..0.99)).collect();
        let s = summarize(&trace_of(&draws, 20), &levels).map_err(|e| e.to_string())?;
        if (1..s.levels.len()).any(|j| s.quantiles[(0, j)] < s.quantiles[(0, j - 1)]) {
            return Err("quantiles not monotone".into());
        }
    }
    Ok(())
}

fn property_vhat() -> Result<(), String> {
    let (sigma, n) = (1.3, 200usize);
    let law = Normal::new(0.5, sigma / (n as f64).sqrt()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let draws: Vec<f64> = (0..1_000_000).map(|_| law.sample(&mut rng)).collect();
    let s = summarize(&trace_of(&draws, n), &[]).map_err(|e| e.to_string())?;
    let rel = (s.vhat[(0, 0)] / (sigma * sigma) - 1.0).abs();
    if rel < 0.01 {
        Ok(())
    } else {
        Err(format!("relative error {rel:.4}"))
    }
}

fn property_rl_variance() -> Result<(), String> {
    let grid: Vec<f64> = (1..=20).map(|i| i as f64 * 0.05).collect();
    let paths = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut s1, mut s2) = (vec![0.0; grid.len()], vec![0.0; grid.len()]);
    for _ in 0..paths {
        let p = sample_riemann_liouville(&grid, &mut rng).map_err(|e| e.to_string())?;
        for (i, v) in p.values.iter().enumerate() {
            s1[i] += v;
            s2[i] += v * v;
        }
    }
    for &i in &[9usize, 19] {
        let t = grid[i];
        // ∫₀ᵗ (t−u) du by the midpoint rule, plus the polynomial part.
        let m = 100_000;
        let h = t / m as f64;
        let integral: f64 = (0..m).map(|j| t - (j as f64 + 0.5) * h).sum::<f64>() * h;
        let want = integral + 1.0 + t * t + t.powi(4);
        let mean = s1[i] / paths as f64;
        let var = s2[i] / paths as f64 - mean * mean;
        // Var of a sample variance of Gaussian values is 2σ⁴/(N−1).
        let se = want * (2.0 / (paths as f64 - 1.0)).sqrt();
        if (var - want).abs() > 3.0 * se {
            return Err(format!("t={t}: var {var:.4} vs {want:.4} (se {se:.4})"));
        }
    }
    Ok(())
}

fn property_delta() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut z = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let data = generate(Model::M1, 100, &mut rng).map_err(|e| e.to_string())?;
        let o = oracle_plm(&data).map_err(|e| e.to_string())?;
        let sd = (1.0 / o.efficient_info[(0, 0)]).sqrt();
        z.push(o.delta_n[0] / sd);
    }
    let d = ks_statistic(&z, std_normal_cdf);
    let p = ks_pvalue(d, z.len());
    if p > 0.01 {
        Ok(())
    } else {
        Err(format!("KS {d:.4}, p {p:.4}"))
    }
}

fn property_ess_invariance() -> Result<(), String> {
    let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.5, 2.0, -0.3, 0.2, -0.3, 0.7]);
    let chol = Cholesky::new(cov.clone()).ok_or("covariance not PD")?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut x = DVector::from_element(3, 2.0);
    let steps = 100_000;
    let mut sum = DVector::zeros(3);
    let mut outer = DMatrix::zeros(3, 3);
    for _ in 0..1000 {
        x = elliptical_slice_step(&x, &chol, |_| 0.0, &mut rng);
    }
    for _ in 0..steps {
        x = elliptical_slice_step(&x, &chol, |_| 0.0, &mut rng);
        sum += &x;
        outer += &x * x.transpose();
    }
    let mean = sum / steps as f64;
    let emp = outer / steps as f64 - &mean * mean.transpose();
    for i in 0..3 {
        let se = (cov[(i, i)] / steps as f64).sqrt();
        if mean[i].abs() > 4.0 * se {
            return Err(format!("mean[{i}] = {:.4}", mean[i]));
        }
        for j in 0..3 {
            let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / steps as f64).sqrt();
            if (emp[(i, j)] - cov[(i, j)]).abs() > 4.0 * se {
                return Err(format!("cov[{i},{j}] = {:.4} vs {:.4}", emp[(i, j)], cov[(i, j)]));
            }
        }
    }
    Ok(())
}

fn criterion_7() -> Outcome {
    let checks: [(&str, fn() -> Result<(), String>); 6] = [
        ("gram", property_gram),
        ("quantiles", property_quantiles),
        ("vhat", property_vhat),
        ("rl-variance", property_rl_variance),
        ("delta-law", property_delta),
        ("ess-invariance", property_ess_invariance),
    ];
    let mut failures = Vec::new();
    for (name, check) in checks {
        if let Err(e) = check() {
            failures.push(format!("{name}: {e}"));
        }
    }
    Outcome {
        name: "7 property suites",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "all 6 passed".into()
        } else {
            failures.join("; ")
        },
    }
}

fn main() {
    let started = Instant::now();
    let mut outcomes = vec![criterion_6(), criterion_7()];
    let (reports, determinism) = table_one();
    outcomes.push(criterion_1(&reports));
    outcomes.push(criterion_2(&reports));
    outcomes.push(criterion_4(&reports));
    outcomes.push(criterion_5(&reports));
    outcomes.push(determinism);
    outcomes.push(criterion_3());
    outcomes.sort_by_key(|o| o.name);

    for o in &outcomes {
        println!("{} criterion {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    println!("acceptance finished in {:.0}s", started.elapsed().as_secs_f64());
    if outcomes.iter().any(|o| !o.pass) {
        std::process::exit(1);
    }
}
