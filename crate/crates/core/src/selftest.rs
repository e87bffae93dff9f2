//! Invariant suite run by the `selftest` command.
//!
//! Every check draws its random inputs from fixed ChaCha8 seeds, so a run is
//! reproducible. A check passes when its worst metric is at most its
//! tolerance; a numerical error inside a check is reported as a failure, not
//! propagated.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correlations::{
    build_gram, generic_kernel, integrate_r01, integrate_r10, Basis, KernelModel, WeightSpec,
};
use crate::error::Result;
use crate::ginibre_kernel::{kernel_tilde, psi_deconjugate, sum_kernel, KernelBlock, Root, SpectralPoint};
use crate::hermitian::{Beta, HermWeight, HermitianKernel, HermitianModel};
use crate::skewalg::{cauchy_binet_residual, determinant, pf_block_sum, pfaffian, Block2, SkewMatrix};
use crate::specfun::{ln_factorial, with_flipped_remainder};

type C64 = Complex64;

/// Faults the suite can be run under, to confirm the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    None,
    /// Inverts the sign of r_M in the closed-form kernel.
    FlipRemainder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// Worst observed value of the checked quantity.
    pub metric: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seconds: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub fault: Fault,
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Fixed-width table, one row per check.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<28} {:>6} {:>12} {:>10} {:>8}  note",
            "check", "status", "metric", "tolerance", "seconds"
        );
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<28} {:>6} {:>12.3e} {:>10.1e} {:>8.2}  {}",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.metric,
                c.tolerance,
                c.seconds,
                c.note
            );
        }
        let _ = writeln!(s, "{} checks, {} failed", self.checks.len(), self.failures());
        s
    }
}

fn run_check(name: &str, tolerance: f64, f: impl FnOnce() -> Result<(f64, String)>) -> CheckResult {
    let start = Instant::now();
    let (metric, note, ok) = match f() {
        Ok((m, note)) => (m, note, m <= tolerance),
        Err(e) => (f64::INFINITY, format!("error: {e}"), false),
    };
    CheckResult {
        name: name.into(),
        metric,
        tolerance,
        passed: ok && metric.is_finite(),
        seconds: start.elapsed().as_secs_f64(),
        note,
    }
}

fn normal_c(rng: &mut ChaCha8Rng) -> C64 {
    // Entries need only be generic; uniform on the square is enough.
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

pub fn random_skew(rng: &mut ChaCha8Rng, dim: usize) -> SkewMatrix {
    SkewMatrix::from_upper(dim, |_, _| normal_c(rng)).expect("from_upper builds a skew matrix")
}

/// max |Pf(A)² − det A| / |det A| over 500 complex skew matrices of
/// dimension 2..12.
pub fn check_pf_det() -> CheckResult {
    run_check("pfaffian_squared_is_det", 1e-9, || {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9f);
        let mut worst: f64 = 0.0;
        for i in 0..500 {
            let dim = 2 + 2 * (i % 6);
            let a = random_skew(&mut rng, dim);
            let pf = pfaffian(&a);
            let det = determinant(&a.to_dmatrix())?;
            worst = worst.max((pf * pf - det).norm() / det.norm());
        }
        Ok((worst, "500 matrices, dims 2..12".into()))
    })
}

/// Pf(J + K) against the sum over principal block minors, T ≤ 4.
pub fn check_block_sum() -> CheckResult {
    run_check("pf_block_sum_expansion", 1e-10, || {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7e);
        let mut worst: f64 = 0.0;
        for i in 0..100 {
            let t = 1 + i % 4;
            let k = random_skew(&mut rng, 2 * t);
            let blocks: Vec<Block2> = (0..t * t)
                .map(|ab| {
                    let (a, b) = (ab / t, ab % t);
                    let g = |r, c| k.get(2 * a + r, 2 * b + c);
                    [[g(0, 0), g(0, 1)], [g(1, 0), g(1, 1)]]
                })
                .collect();
            let e = pf_block_sum(t, &blocks)?;
            worst = worst.max((e.direct - e.expansion).norm() / e.direct.norm().max(1.0));
        }
        Ok((worst, "100 random block sets, T = 1..4".into()))
    })
}

/// Both sides of the Pfaffian Cauchy–Binet identity, J, K ≤ 4.
pub fn check_cauchy_binet() -> CheckResult {
    run_check("cauchy_binet", 1e-9, || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xcb);
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            let (j, k) = (1 + i % 4, 1 + (i / 4) % 4);
            let a = DMatrix::from_fn(2 * j, 2 * k, |_, _| normal_c(&mut rng) * 0.5);
            let b = random_skew(&mut rng, 2 * j);
            let c = random_skew(&mut rng, 2 * k);
            worst = worst.max(cauchy_binet_residual(&a, &b, &c)?);
        }
        Ok((worst, "200 triples, J, K = 1..4".into()))
    })
}

/// Gram matrix of the Ginibre skew-orthogonal family, N = 10: the paired
/// entries equal 2√(2π)(2m)! (relative) and all others vanish relative to the
/// geometric mean of the two pair norms.
pub fn check_skew_orthogonality() -> CheckResult {
    run_check("skew_orthogonality", 1e-8, || {
        let n = 10;
        let g = build_gram(&WeightSpec::Ginibre, n, &Basis::SkewGinibre)?;
        let norm = |i: usize| 2.0 * (2.0 * PI).sqrt() * ln_factorial(2 * (i / 2) as u64).exp();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let v = g.u().get(i, j).re;
                let dev = if i % 2 == 0 && j == i + 1 {
                    (v - norm(i)).abs() / norm(i)
                } else {
                    v.abs() / (norm(i) * norm(j)).sqrt()
                };
                worst = worst.max(dev);
            }
        }
        Ok((worst, "N = 10".into()))
    })
}

/// Points shared by the kernel checks: two real, three off the axis.
pub fn mixed_points() -> [SpectralPoint; 5] {
    [
        SpectralPoint::Real(-0.7),
        SpectralPoint::Real(1.3),
        SpectralPoint::UpperHalf(C64::new(0.4, 0.6)),
        SpectralPoint::UpperHalf(C64::new(-1.1, 0.25)),
        SpectralPoint::UpperHalf(C64::new(0.9, 1.4)),
    ]
}

fn rel_block_diff(a: &KernelBlock, b: &KernelBlock) -> f64 {
    let scale = b.entries().iter().map(|e| e.norm()).fold(0.0, f64::max).max(1e-300);
    a.max_abs_diff(b) / scale
}

/// Closed-form K̃_{2M} against the ψ-deconjugated defining sums, M = 1..8.
pub fn check_closed_form_vs_sum() -> CheckResult {
    run_check("closed_form_vs_sum", 1e-9, || {
        let pts = mixed_points();
        let mut worst: f64 = 0.0;
        for m in 1..=8 {
            for &p in &pts {
                for &q in &pts {
                    let sum = psi_deconjugate(&sum_kernel(m, p, q, Root::Phi), p, q);
                    worst = worst.max(rel_block_diff(&kernel_tilde(m, p, q), &sum));
                }
            }
        }
        Ok((worst, "M = 1..8, 5 mixed points, relative to block scale".into()))
    })
}

/// ∫R_{1,0} + 2∫_H R_{0,1} = 2M for M = 1, 2, 3.
pub fn check_sum_rule() -> CheckResult {
    run_check("sum_rule", 1e-3, || {
        let mut worst: f64 = 0.0;
        for m in 1..=3u32 {
            let k = KernelModel::FiniteGinibre { m };
            let total = integrate_r10(&k)? + 2.0 * integrate_r01(&k)?;
            worst = worst.max((total - 2.0 * m as f64).abs() / (2.0 * m as f64));
        }
        Ok((worst, "M = 1..3".into()))
    })
}

/// The generic kernel is independent of the monic basis and, for the
/// Ginibre weight, equals the ψ-conjugated closed form.
pub fn check_basis_invariance() -> CheckResult {
    run_check("basis_invariance", 1e-8, || {
        let n = 4;
        let mono = build_gram(&WeightSpec::Ginibre, n, &Basis::Monomial)?;
        let skew = build_gram(&WeightSpec::Ginibre, n, &Basis::SkewGinibre)?;
        let pts = mixed_points();
        let mut worst: f64 = (mono.pfaffian() - skew.pfaffian()).abs() / skew.pfaffian().abs();
        for &p in &pts {
            for &q in &pts {
                let a = generic_kernel(&mono, p, q)?;
                let b = generic_kernel(&skew, p, q)?;
                let closed = psi_deconjugate(&a, p, q);
                worst = worst
                    .max(rel_block_diff(&a, &b))
                    .max(rel_block_diff(&closed, &kernel_tilde(n as u32 / 2, p, q)));
            }
        }
        Ok((worst, "Ginibre N = 4, monomial vs skew-orthogonal basis".into()))
    })
}

/// S̃_{2M}(x, x) > 0 on a grid; reported as the negated minimum.
pub fn check_real_density_positive() -> CheckResult {
    run_check("real_density_positive", 0.0, || {
        let mut worst = f64::NEG_INFINITY;
        for m in [1u32, 4, 16] {
            for i in -40..=40 {
                let p = SpectralPoint::Real(0.25 * i as f64);
                worst = worst.max(-kernel_tilde(m, p, p).s.re);
            }
        }
        Ok((worst, "M in {1, 4, 16}, x in [-10, 10]".into()))
    })
}

/// ∫R_1 = N for the β = 1 Gaussian ensemble, N = 4.
pub fn check_hermitian_mass() -> CheckResult {
    run_check("hermitian_one_point_mass", 1e-6, || {
        let model = HermitianModel::new(Beta::One, HermWeight::Gaussian, 4)?;
        let k = KernelModel::Hermitian(Arc::new(HermitianKernel::new(model)?));
        let v = integrate_r10(&k)?;
        Ok(((v - 4.0).abs() / 4.0, format!("integral {v:.12}")))
    })
}

pub fn run_selftest(fault: Fault) -> SelftestReport {
    let run = || {
        vec![
            check_pf_det(),
            check_block_sum(),
            check_cauchy_binet(),
            check_skew_orthogonality(),
            check_closed_form_vs_sum(),
            check_sum_rule(),
            check_basis_invariance(),
            check_real_density_positive(),
            check_hermitian_mass(),
        ]
    };
    // The fault hook is thread-local; every check that reaches r_M runs on
    // this thread.
    let checks = match fault {
        Fault::None => run(),
        Fault::FlipRemainder => with_flipped_remainder(run),
    };
    SelftestReport { fault, checks }
}
