use nalgebra::DMatrix;
use pfaffpoint::skewalg::{determinant, pf_congruence, pfaffian, SkewMatrix};
use pfaffpoint::C64;
use proptest::prelude::*;

fn skew(dim: usize, vals: &[(f64, f64)]) -> SkewMatrix {
    let mut it = vals.iter().cycle();
    SkewMatrix::from_upper(dim, |_, _| {
        let &(a, b) = it.next().unwrap();
        C64::new(a, b)
    })
    .unwrap()
}

fn entries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 66)
}

fn dims() -> impl Strategy<Value = usize> {
    (1usize..=6).prop_map(|h| 2 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn pfaffian_squares_to_determinant(dim in dims(), v in entries()) {
        let a = skew(dim, &v);
        let pf = pfaffian(&a);
        let det = determinant(&a.to_dmatrix()).unwrap();
        prop_assert!((pf * pf - det).norm() <= 1e-9 * det.norm().max(1.0));
    }

    #[test]
    fn negation_flips_by_half_dimension(dim in dims(), v in entries()) {
        let a = skew(dim, &v);
        let sign = if (dim / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let d = pfaffian(&a.neg()) - pfaffian(&a) * sign;
        prop_assert!(d.norm() <= 1e-12 * pfaffian(&a).norm().max(1.0));
    }

    #[test]
    fn permutation_changes_pfaffian_by_its_sign(dim in dims(), v in entries(), perm in Just((0..12).collect::<Vec<usize>>()).prop_shuffle()) {
        let a = skew(dim, &v);
        let p: Vec<usize> = perm.into_iter().filter(|&i| i < dim).collect();
        let inversions = (0..dim).flat_map(|i| (i + 1..dim).map(move |j| (i, j))).filter(|&(i, j)| p[i] > p[j]).count();
        let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
        let permuted = SkewMatrix::new(dim, (0..dim * dim).map(|k| a.get(p[k / dim], p[k % dim])).collect()).unwrap();
        let (lhs, rhs) = (pfaffian(&permuted), pfaffian(&a) * sign);
        prop_assert!((lhs - rhs).norm() <= 1e-11 * rhs.norm().max(1.0));
    }

    #[test]
    fn direct_sum_multiplies(d1 in dims(), d2 in dims(), v in entries(), w in entries()) {
        prop_assume!(d1 + d2 <= 14);
        let (a, b) = (skew(d1, &v), skew(d2, &w));
        let lhs = pfaffian(&a.direct_sum(&b));
        let rhs = pfaffian(&a) * pfaffian(&b);
        prop_assert!((lhs - rhs).norm() <= 1e-11 * rhs.norm().max(1.0));
    }

    #[test]
    fn congruence_scales_by_determinant(dim in dims(), v in entries(), d in prop::collection::vec(-1.0..1.0f64, 144)) {
        let a = skew(dim, &v);
        let dm = DMatrix::from_fn(dim, dim, |i, j| C64::new(d[i * 12 + j], d[(i * 12 + j + 7) % 144]));
        let (lhs, rhs) = pf_congruence(&a, &dm).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-9 * rhs.norm().max(1.0));
    }
}

#[test]
fn standard_symplectic_has_unit_pfaffian() {
    for t in 1..7 {
        assert_eq!(pfaffian(&SkewMatrix::standard_symplectic(t)), C64::new(1.0, 0.0));
    }
}
