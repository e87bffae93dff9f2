use pfaffpoint::correlations::{integrate_r10, KernelModel, Poly};
use pfaffpoint::hermitian::{herm_corr, Beta, HermWeight, HermitianKernel, HermitianModel};
use std::f64::consts::PI;
use std::sync::Arc;

fn kernel(beta: Beta, n: usize) -> Arc<HermitianKernel> {
    Arc::new(HermitianKernel::new(HermitianModel::new(beta, HermWeight::Gaussian, n).unwrap()).unwrap())
}

#[test]
fn two_point_function_at_two_is_the_joint_density() {
    // Z = ½∫∫|x − y|^β e^{−(x²+y²)/2}; x − y has variance 2, so
    // E|x − y| = 2/√π and E(x − y)⁴ = 12.
    for (beta, p, z) in [(Beta::One, 1, 2.0 * PI.sqrt()), (Beta::Four, 4, 12.0 * PI)] {
        let k = kernel(beta, 2);
        assert!((k.partition() - z).abs() < 1e-10 * z, "{beta:?}: {}", k.partition());
        for &(a, b) in &[(0.3, -0.5), (1.2, 1.9), (-2.0, 0.1)] {
            let r2 = herm_corr(&k, &[a, b]).unwrap();
            let exact = (a - b as f64).abs().powi(p) * (-(a * a + b * b) / 2.0).exp() / z;
            assert!((r2 - exact).abs() < 1e-10 * exact, "{beta:?} ({a}, {b}): {r2} vs {exact}");
        }
    }
}

#[test]
fn correlations_are_symmetric_in_their_arguments() {
    let ys = [0.4, -1.1, 1.7];
    let perms = [[0, 1, 2], [1, 0, 2], [2, 1, 0], [1, 2, 0], [2, 0, 1], [0, 2, 1]];
    for beta in [Beta::One, Beta::Four] {
        let k = kernel(beta, 4);
        let base = herm_corr(&k, &ys).unwrap();
        assert!(base > 0.0);
        for p in perms {
            let v = herm_corr(&k, &[ys[p[0]], ys[p[1]], ys[p[2]]]).unwrap();
            assert!((v - base).abs() < 1e-10 * base, "{beta:?} {p:?}: {v} vs {base}");
        }
    }
}

#[test]
fn density_is_nonnegative_on_a_grid() {
    for beta in [Beta::One, Beta::Four] {
        for n in [2, 4, 6] {
            let k = kernel(beta, n);
            for i in 0..=48 {
                let y = -6.0 + 0.25 * i as f64;
                let r = herm_corr(&k, &[y]).unwrap_or_else(|e| panic!("{beta:?} N={n} y={y}: {e}"));
                assert!(r >= 0.0);
            }
        }
    }
}

#[test]
fn goe_density_at_four_is_even_and_integrates_to_four() {
    let k = kernel(Beta::One, 4);
    for y in [0.1, 0.8, 1.5, 2.6, 4.0] {
        let a = herm_corr(&k, &[y]).unwrap();
        let b = herm_corr(&k, &[-y]).unwrap();
        assert!((a - b).abs() < 1e-10 * a, "{y}: {a} vs {b}");
    }
    let total = integrate_r10(&KernelModel::Hermitian(k)).unwrap();
    assert!((total - 4.0).abs() < 1e-8, "{total}");
}

#[test]
fn gse_density_integrates_to_n() {
    for n in [2, 4] {
        let total = integrate_r10(&KernelModel::Hermitian(kernel(Beta::Four, n))).unwrap();
        assert!((total - n as f64).abs() < 1e-8, "N={n}: {total}");
    }
}

#[test]
fn correlations_do_not_depend_on_the_basis() {
    // Monic polynomials with fixed pseudo-random lower coefficients.
    let lower = |k: usize, j: usize| (((k * 7 + j * 13) % 11) as f64 - 5.0) / 4.0;
    for beta in [Beta::One, Beta::Four] {
        let model = HermitianModel::new(beta, HermWeight::Gaussian, 4).unwrap();
        let basis: Vec<Poly> = (0..model.family_size())
            .map(|k| {
                let mut c: Vec<f64> = (0..k).map(|j| lower(k, j)).collect();
                c.push(1.0);
                Poly::new(c)
            })
            .collect();
        let a = Arc::new(HermitianKernel::with_basis(model.clone(), basis).unwrap());
        let b = Arc::new(HermitianKernel::new(model).unwrap());
        for ys in [vec![0.3], vec![-0.7, 1.2], vec![0.0, 0.9, -1.6]] {
            let va = herm_corr(&a, &ys).unwrap();
            let vb = herm_corr(&b, &ys).unwrap();
            assert!((va - vb).abs() < 1e-8 * vb, "{beta:?} {ys:?}: {va} vs {vb}");
        }
    }
}
