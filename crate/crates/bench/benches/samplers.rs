use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semibvm::harness::{exact_direction, generate, Model};
use semibvm::kernels::gram;
use semibvm::lfd::nadaraya_watson;
use semibvm::{fit_plm, BandwidthPrior, KernelConfig, McmcConfig, PriorSpec, PriorStructure};

fn bench_gram(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram_factor");
    for n in [100, 400] {
        let data = generate(Model::M1, n, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let cfg = KernelConfig::squared_exponential(1.5).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &data, |b, d| {
            b.iter(|| gram(&d.v, &cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_nw(c: &mut Criterion) {
    let data = generate(Model::M1, 400, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    c.bench_function("nadaraya_watson_400", |b| {
        b.iter(|| nadaraya_watson(&data.u, &data.v, None).unwrap())
    });
}

fn bench_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_plm_1000_iterations");
    group.sample_size(10);
    for n in [100, 400] {
        let data = generate(Model::M1, n, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let prior = PriorSpec::new(
            PriorStructure::Dependent(exact_direction(Model::M1, &data).unwrap()),
            BandwidthPrior::adaptive(1.0, 1.0),
            0.5,
        )
        .unwrap();
        let mcmc = McmcConfig::new(1000, 500, 4).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &data, |b, d| {
            b.iter(|| fit_plm(d, &prior, &mcmc).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_gram, bench_nw, bench_fit);
criterion_main!(benches);
