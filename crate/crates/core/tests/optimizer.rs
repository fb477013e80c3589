use lgflat::crosstalk::{crosstalk_matrix, full_field_states, radial_states, CrosstalkMatrix};
use lgflat::detection::DetectionModel;
use lgflat::optimizer::{exhaustive_search, ga_optimize, random_subset_stats, subset_fitness, GaParams, SubsetGenome};
use lgflat::quadrature::GridSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Diagonal in [0.2, 1], off-diagonal in [0, 0.05).
fn random_matrix(n: usize, seed: u64) -> CrosstalkMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n * n)
        .map(|k| if k / n == k % n { rng.random_range(0.2..=1.0) } else { rng.random_range(0.0..0.05) })
        .collect();
    CrosstalkMatrix::new((0..n).map(|i| format!("m{i}")).collect(), values, None).unwrap()
}

#[test]
fn ga_matches_exhaustive_on_small_problems() {
    let mut hits = 0;
    for seed in 0..20 {
        let m = random_matrix(12, seed);
        let oracle = exhaustive_search(&m, 5).unwrap();
        let ga = ga_optimize(&m, 5, &GaParams { rng_seed: seed, ..GaParams::default() }).unwrap();
        assert!(ga.rate <= oracle.rate + 1e-12);
        assert_eq!(subset_fitness(&m, ga.best.indices()), ga.rate);
        assert!(ga.trace.windows(2).all(|w| w[1].best >= w[0].best));
        assert_eq!(ga.trace.len(), 201);
        if ga.rate == oracle.rate {
            hits += 1;
        }
    }
    assert!(hits >= 19, "{hits}/20");
}

#[test]
fn identity_matrix_is_trivial() {
    let m = CrosstalkMatrix::identity((0..15).map(|i| i.to_string()).collect());
    for d in [2, 7, 15] {
        let r = ga_optimize(&m, d, &GaParams { generations: 5, ..GaParams::default() }).unwrap();
        assert_eq!(r.rate, (d as f64).log2());
        let s = random_subset_stats(&m, d, 50, 1).unwrap();
        assert_eq!(s.max, (d as f64).log2());
    }
}

#[test]
fn random_means_agree_across_seeds() {
    let m = crosstalk_matrix(
        &radial_states(0, 0..=9, 1.0),
        &DetectionModel::intensity_flattening(4.0, GridSpec::for_modes(1.0, 0)).unwrap(),
    )
    .unwrap();
    let a = random_subset_stats(&m, 6, 1000, 11).unwrap();
    let b = random_subset_stats(&m, 6, 1000, 12).unwrap();
    let se = ((a.stddev.powi(2) + b.stddev.powi(2)) / 1000.0).sqrt();
    assert!((a.mean - b.mean).abs() <= 3.0 * se, "{} vs {} (se {se})", a.mean, b.mean);
    assert_eq!(random_subset_stats(&m, 6, 1000, 11).unwrap(), a);
}

#[test]
fn thread_count_does_not_change_results() {
    let m = random_matrix(20, 3);
    let params = GaParams { generations: 40, rng_seed: 9, ..GaParams::default() };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| (ga_optimize(&m, 8, &params).unwrap(), random_subset_stats(&m, 8, 300, 4).unwrap()))
    };
    assert_eq!(run(1), run(8));
}

#[test]
fn full_field_ga_beats_random_sampling() {
    let m = crosstalk_matrix(
        &full_field_states(10, 1.0),
        &DetectionModel::intensity_flattening(8.4, GridSpec::for_modes(1.0, 9)).unwrap(),
    )
    .unwrap();
    let stats = random_subset_stats(&m, 30, 1000, 5).unwrap();
    let ga = ga_optimize(&m, 30, &GaParams { rng_seed: 5, ..GaParams::default() }).unwrap();
    assert!(ga.rate >= stats.max);
    assert!(ga.rate >= stats.mean + 2.0 * stats.stddev);
    assert!(SubsetGenome::new(ga.best.indices().to_vec(), 55).is_ok());
}
