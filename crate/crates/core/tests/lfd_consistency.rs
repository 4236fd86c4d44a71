use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semibvm::harness::{exact_direction, generate, Model};
use semibvm::lfd::nadaraya_watson;

fn nw_error(n: usize, seed: u64) -> f64 {
    let data = generate(Model::M1, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let est = nadaraya_watson(&data.u, &data.v, None).unwrap();
    est.empirical_distance(&exact_direction(Model::M1, &data).unwrap())
}

#[test]
fn nadaraya_watson_error_shrinks_with_n() {
    let small: f64 = (0..5).map(|s| nw_error(200, s)).sum::<f64>() / 5.0;
    let large: f64 = (0..5).map(|s| nw_error(2000, 100 + s)).sum::<f64>() / 5.0;
    assert!(large < small, "n=2000: {large}, n=200: {small}");
}

#[test]
fn nadaraya_watson_stays_inside_the_negated_range() {
    let data = generate(Model::M2, 150, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let est = nadaraya_watson(&data.u, &data.v, None).unwrap();
    let (lo, hi) = (-data.u.max(), -data.u.min());
    assert!(est.at_design.iter().all(|h| *h >= lo - 1e-12 && *h <= hi + 1e-12));
}
