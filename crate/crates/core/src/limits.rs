//! Large-M kernels: the pointwise limit of K̃_{2M}, bulk-scaled evaluation
//! around u√(2M), and the complex Ginibre kernel κ the off-axis bulk tends to.
//!
//! Off the real axis the scaled kernel only converges after conjugation by
//! D(s) = diag(θ(s), θ(−s)) with θ(s) = exp(2i√(2M) Im(u) Re(s)). det D = 1, so
//! Pfaffians are unchanged. The conjugated S entry tends to κ up to a phase of
//! the form g(s)/g(s′), which cancels in every correlation function.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ginibre_kernel::{kernel_tilde, ln_sqrt_erfc, KernelBlock, SpectralPoint};
use crate::specfun::{erfc, sgn, FRAC_1_SQRT_2PI};

type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// The M → ∞ limit of K̃_{2M}(γ, γ′).
pub fn kernel_limit(p: SpectralPoint, q: SpectralPoint) -> KernelBlock {
    let c = FRAC_1_SQRT_2PI;
    let gauss = |d: C64| (-d * d / 2.0).exp();
    match (p, q) {
        (SpectralPoint::Real(x), SpectralPoint::Real(xp)) => {
            let g = c * (-(x - xp) * (x - xp) / 2.0).exp();
            let d = x - xp;
            KernelBlock {
                ds: C64::new((xp - x) * g, 0.0),
                s: C64::new(g, 0.0),
                s_rev: C64::new(g, 0.0),
                is_plus_e: C64::new(
                    0.5 * sgn(d) * erfc(d.abs() / std::f64::consts::SQRT_2),
                    0.0,
                ),
            }
        }
        (SpectralPoint::UpperHalf(z), SpectralPoint::UpperHalf(zp)) => {
            let pp = c * (ln_sqrt_erfc(z.im) + ln_sqrt_erfc(zp.im)).exp();
            let (zc, zpc) = (z.conj(), zp.conj());
            KernelBlock {
                ds: pp * (zp - z) * gauss(z - zp),
                s: pp * I * (zpc - z) * gauss(z - zpc),
                s_rev: pp * I * (zc - zp) * gauss(zp - zc),
                is_plus_e: -pp * (zpc - zc) * gauss(zc - zpc),
            }
        }
        (SpectralPoint::Real(x), SpectralPoint::UpperHalf(z)) => real_complex_limit(x, z),
        (SpectralPoint::UpperHalf(z), SpectralPoint::Real(x)) => real_complex_limit(x, z).reversed(),
    }
}

fn real_complex_limit(x: f64, z: C64) -> KernelBlock {
    let q = FRAC_1_SQRT_2PI * ln_sqrt_erfc(z.im).exp();
    let zc = z.conj();
    let g = (-(x - z) * (x - z) / 2.0).exp();
    let gc = (-(x - zc) * (x - zc) / 2.0).exp();
    KernelBlock {
        ds: q * (z - x) * g,
        s: q * I * (zc - x) * gc,
        s_rev: q * g,
        is_plus_e: -I * q * gc,
    }
}

/// κ(s, s′) = (1/π) exp(−|s|²/2 − |s′|²/2 + s s̄′).
pub fn complex_ginibre_kernel(s: C64, sp: C64) -> C64 {
    (-s.norm_sqr() / 2.0 - sp.norm_sqr() / 2.0 + s * sp.conj()).exp() / std::f64::consts::PI
}

/// Bulk centre u with |u| < 1 at truncation index M.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulkScaling {
    u: C64,
    m: u32,
}

impl BulkScaling {
    /// A centre with Im u < 0 is replaced by its conjugate; the ensemble is
    /// conjugation symmetric.
    pub fn new(u: C64, m: u32) -> Result<Self> {
        if !(u.norm() < 1.0) {
            return Err(Error::Invalid(format!("bulk centre must satisfy |u| < 1, got {u}")));
        }
        if m == 0 {
            return Err(Error::Invalid("truncation index must be at least 1".into()));
        }
        let u = if u.im < 0.0 { u.conj() } else { u };
        Ok(BulkScaling { u, m })
    }

    pub fn u(&self) -> C64 {
        self.u
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// u√(2M).
    pub fn center(&self) -> C64 {
        self.u * (2.0 * self.m as f64).sqrt()
    }

    /// Centre on the real axis; decided by Im u = 0 exactly.
    pub fn is_real(&self) -> bool {
        self.u.im == 0.0
    }

    /// θ(s) = exp(2i√(2M) Im(u) Re(s)).
    pub fn theta(&self, s: C64) -> C64 {
        C64::from_polar(1.0, 2.0 * (2.0 * self.m as f64).sqrt() * self.u.im * s.re)
    }

    /// Spectral point u√(2M) + s. On a real centre a real offset stays on the
    /// axis; otherwise the shifted point must lie strictly above it.
    pub fn point(&self, s: Offset) -> Result<SpectralPoint> {
        let c = self.center();
        match s {
            Offset::Real(r) if self.is_real() => SpectralPoint::real(c.re + r),
            Offset::Real(r) => SpectralPoint::upper(c + r),
            Offset::Complex(w) => SpectralPoint::upper(c + w).map_err(|_| {
                Error::Invalid(format!(
                    "offset {w} moves the bulk point {} off the upper half plane",
                    c + w
                ))
            }),
        }
    }
}

/// Displacement from the bulk centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Offset {
    Real(f64),
    Complex(C64),
}

impl Offset {
    pub fn value(&self) -> C64 {
        match *self {
            Offset::Real(r) => C64::new(r, 0.0),
            Offset::Complex(w) => w,
        }
    }
}

/// Raw and θ-conjugated kernel at a pair of bulk points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulkBlock {
    pub points: (SpectralPoint, SpectralPoint),
    pub raw: KernelBlock,
    pub conjugated: KernelBlock,
}

pub fn bulk_scaled_block(scaling: &BulkScaling, s: Offset, sp: Offset) -> Result<BulkBlock> {
    let p = scaling.point(s)?;
    let q = scaling.point(sp)?;
    let raw = kernel_tilde(scaling.m(), p, q);
    let (a, b) = (s.value(), sp.value());
    let conjugated = raw.conjugate_diag(
        [scaling.theta(a), scaling.theta(-a)],
        [scaling.theta(b), scaling.theta(-b)],
    );
    Ok(BulkBlock {
        points: (p, q),
        raw,
        conjugated,
    })
}

/// The limit a real-centre bulk block is compared with: K̃ at the offsets.
pub fn real_bulk_limit(s: Offset, sp: Offset) -> Result<KernelBlock> {
    let pt = |o: Offset| match o {
        Offset::Real(r) => SpectralPoint::real(r),
        Offset::Complex(w) => SpectralPoint::upper(w),
    };
    Ok(kernel_limit(pt(s)?, pt(sp)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(x: f64) -> SpectralPoint {
        SpectralPoint::Real(x)
    }
    fn h(a: f64, b: f64) -> SpectralPoint {
        SpectralPoint::UpperHalf(C64::new(a, b))
    }

    #[test]
    fn coincident_real_values() {
        let k = kernel_limit(r(0.37), r(0.37));
        assert!((k.s.re - FRAC_1_SQRT_2PI).abs() < 1e-16);
        assert_eq!(k.is_plus_e, C64::new(0.0, 0.0));
        assert_eq!(k.ds, C64::new(0.0, 0.0));
    }

    #[test]
    fn limit_is_antisymmetric_in_closed_form() {
        let pts = [r(0.1), r(-0.9), h(0.2, 0.3), h(-0.4, 1.2)];
        for &p in &pts {
            for &q in &pts {
                let a = kernel_limit(p, q).reversed();
                let b = kernel_limit(q, p);
                assert!(a.max_abs_diff(&b) < 1e-16, "{p:?} {q:?}");
            }
        }
    }

    #[test]
    fn finite_kernel_approaches_limit() {
        let pts = [r(0.3), r(-0.4), h(0.2, 0.5), h(-0.3, 0.8)];
        for &p in &pts {
            for &q in &pts {
                let d = kernel_tilde(60, p, q).max_abs_diff(&kernel_limit(p, q));
                assert!(d < 1e-12, "{p:?} {q:?} {d}");
            }
        }
    }

    #[test]
    fn kappa_identities() {
        let (s, sp) = (C64::new(0.3, -0.2), C64::new(-1.0, 0.5));
        assert!((complex_ginibre_kernel(s, s).re - 1.0 / std::f64::consts::PI).abs() < 1e-16);
        let prod = complex_ginibre_kernel(s, sp) * complex_ginibre_kernel(sp, s);
        let want = (-(s - sp).norm_sqr()).exp() / std::f64::consts::PI.powi(2);
        assert!((prod - want).norm() < 1e-16);
    }

    #[test]
    fn scaling_validation() {
        assert!(BulkScaling::new(C64::new(1.0, 0.0), 10).is_err());
        assert!(BulkScaling::new(C64::new(0.6, 0.8), 10).is_err());
        assert!(BulkScaling::new(C64::new(0.1, 0.0), 0).is_err());
        let b = BulkScaling::new(C64::new(0.3, -0.4), 8).unwrap();
        assert_eq!(b.u(), C64::new(0.3, 0.4));
        assert!(b.point(Offset::Complex(C64::new(0.0, -5.0))).is_err());
    }

    #[test]
    fn zero_centre_reduces_to_finite_kernel() {
        let b = BulkScaling::new(C64::new(0.0, 0.0), 7).unwrap();
        let blk = bulk_scaled_block(&b, Offset::Real(0.4), Offset::Complex(C64::new(0.1, 0.6))).unwrap();
        let direct = kernel_tilde(7, r(0.4), h(0.1, 0.6));
        assert_eq!(blk.raw, direct);
        assert_eq!(blk.conjugated, direct);
    }

    #[test]
    fn conjugation_has_unit_determinant() {
        let b = BulkScaling::new(C64::new(0.2, 0.5), 30).unwrap();
        for &s in &[0.0, 0.4, -1.3] {
            let t = b.theta(C64::new(s, 0.7));
            let t2 = b.theta(C64::new(-s, -0.7));
            assert!((t * t2 - 1.0).norm() < 1e-15);
        }
    }
}
