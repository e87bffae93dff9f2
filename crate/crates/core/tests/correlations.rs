use pfaffpoint::correlations::{
    brute_corr, build_gram, corr_fn, corr_fn_report, mahler_star_volume, partition_fn,
    Basis, Configuration, KernelModel, PartitionSource, Poly, WeightSpec,
};
use pfaffpoint::C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn generic(w: WeightSpec, n: usize, basis: Basis) -> KernelModel {
    KernelModel::Generic(Arc::new(build_gram(&w, n, &basis).unwrap()))
}

#[test]
fn mahler_partition_function_at_degree_two() {
    // Frozen from an independent arbitrary-precision quadrature.
    let z = partition_fn(&WeightSpec::Mahler { s: 3.0 }, 2).unwrap();
    assert!(rel_close(z, 12.0, 1e-9), "{z}");
    assert!(rel_close(mahler_star_volume(2).unwrap(), 8.0, 1e-9));
}

/// Mahler measure of a x² + b x + c from its roots.
fn mahler_measure(a: f64, b: f64, c: f64) -> f64 {
    let disc = C64::new(b * b - 4.0 * a * c, 0.0).sqrt();
    let r1 = (-b + disc) / (2.0 * a);
    let r2 = (-b - disc) / (2.0 * a);
    a.abs() * r1.norm().max(1.0) * r2.norm().max(1.0)
}

#[test]
fn star_body_volume_matches_monte_carlo() {
    // Measure ≤ 1 forces |a|, |c| ≤ 1 and |b| ≤ 2, a box of volume 16.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 1_000_000;
    let mut hits = 0u64;
    for _ in 0..n {
        let a: f64 = rng.gen_range(-1.0..1.0);
        let b: f64 = rng.gen_range(-2.0..2.0);
        let c: f64 = rng.gen_range(-1.0..1.0);
        if mahler_measure(a, b, c) <= 1.0 {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    let est = 16.0 * p;
    let sigma = 16.0 * (p * (1.0 - p) / n as f64).sqrt();
    let v = mahler_star_volume(2).unwrap();
    assert!((est - v).abs() < 5.0 * sigma, "MC {est} ± {sigma} vs {v}");
}

#[test]
fn mahler_real_density_matches_brute_force() {
    let w = WeightSpec::Mahler { s: 3.0 };
    let k = generic(w.clone(), 2, Basis::Monomial);
    for x in [-3.0, -0.8, 0.0, 0.45, 1.0, 2.5] {
        let cfg = Configuration::new(vec![x], vec![]).unwrap();
        let a = corr_fn(&k, &cfg).unwrap();
        let b = brute_corr(&w, 2, &cfg, PartitionSource::Direct).unwrap();
        assert!(rel_close(a, b, 1e-7), "x = {x}: {a} vs {b}");
    }
}

#[test]
fn every_small_configuration_matches_brute_force_at_two() {
    let k = KernelModel::FiniteGinibre { m: 1 };
    let w = WeightSpec::Ginibre;
    let cfgs = [
        Configuration::new(vec![0.3], vec![]).unwrap(),
        Configuration::new(vec![-1.1], vec![]).unwrap(),
        Configuration::new(vec![0.3, -0.9], vec![]).unwrap(),
        Configuration::new(vec![1.4, 0.2], vec![]).unwrap(),
        Configuration::new(vec![], vec![C64::new(0.2, 0.5)]).unwrap(),
        Configuration::new(vec![], vec![C64::new(-1.0, 1.3)]).unwrap(),
    ];
    for cfg in &cfgs {
        let a = corr_fn(&k, cfg).unwrap();
        let b = brute_corr(&w, 2, cfg, PartitionSource::Direct).unwrap();
        assert!(rel_close(a, b, 1e-7), "{cfg:?}: {a} vs {b}");
    }
}

/// Configuration with ℓ + 2m ≤ 2M drawn from a seeded stream.
fn random_config(rng: &mut ChaCha8Rng, big_m: usize) -> Configuration {
    let m = rng.gen_range(0..=big_m);
    let ell = rng.gen_range(0..=2 * big_m - 2 * m);
    let xs = (0..ell).map(|_| rng.gen_range(-2.5..2.5)).collect();
    let zs = (0..m)
        .map(|_| C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(0.01..2.0)))
        .collect();
    Configuration::new(xs, zs).unwrap()
}

#[test]
fn finite_correlations_are_real_and_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for big_m in 1..=3usize {
        let k = KernelModel::FiniteGinibre { m: big_m as u32 };
        for _ in 0..200 {
            let cfg = random_config(&mut rng, big_m);
            let r = corr_fn_report(&k, &cfg).unwrap_or_else(|e| panic!("{cfg:?}: {e}"));
            assert!(r.value >= 0.0);
            assert!(r.imag.abs() <= 1e-8 * r.value.max(1.0), "{cfg:?}: {r:?}");
        }
    }
}

fn monic(coeffs: &[f64]) -> Poly {
    let mut c = coeffs.to_vec();
    c.push(1.0);
    Poly::new(c)
}

#[test]
fn correlations_do_not_depend_on_the_basis() {
    let n = 4;
    let custom = Basis::Custom(vec![
        monic(&[]),
        monic(&[0.7]),
        monic(&[-0.3, 1.2]),
        monic(&[0.5, -0.4, 0.9]),
    ]);
    let models = [
        KernelModel::FiniteGinibre { m: 2 },
        generic(WeightSpec::Ginibre, n, Basis::Monomial),
        generic(WeightSpec::Ginibre, n, Basis::SkewGinibre),
        generic(WeightSpec::Ginibre, n, custom),
    ];
    let cfgs = [
        Configuration::new(vec![0.4], vec![]).unwrap(),
        Configuration::new(vec![-0.6, 1.1], vec![C64::new(0.3, 0.8)]).unwrap(),
        Configuration::new(vec![], vec![C64::new(0.3, 0.8), C64::new(-1.0, 0.2)]).unwrap(),
    ];
    for cfg in &cfgs {
        let vals: Vec<f64> = models.iter().map(|k| corr_fn(k, cfg).unwrap()).collect();
        for v in &vals[1..] {
            assert!(rel_close(*v, vals[0], 1e-8), "{cfg:?}: {vals:?}");
        }
    }
}

fn shuffled<T: Clone>(v: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&i| v[i].clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn exchanging_points_leaves_correlations_unchanged(
        xs in proptest::collection::vec(-2.5f64..2.5, 0..4),
        zs in proptest::collection::vec((-2.0f64..2.0, 0.01f64..2.0), 0..3),
        px in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
        pz in Just(vec![0usize, 1, 2]).prop_shuffle(),
    ) {
        let zs: Vec<C64> = zs.into_iter().map(|(a, b)| C64::new(a, b)).collect();
        let k = KernelModel::FiniteGinibre { m: 4 };
        let px: Vec<usize> = px.into_iter().filter(|&i| i < xs.len()).collect();
        let pz: Vec<usize> = pz.into_iter().filter(|&i| i < zs.len()).collect();
        let a = corr_fn(&k, &Configuration::new(xs.clone(), zs.clone()).unwrap()).unwrap();
        let b = corr_fn(&k, &Configuration::new(shuffled(&xs, &px), shuffled(&zs, &pz)).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-3), "{a} vs {b}");
    }
}
