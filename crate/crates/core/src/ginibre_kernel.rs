//! Finite-size matrix kernel of the real Ginibre ensemble.
//!
//! Two constructions live here. The closed forms (`kernel_tilde`) are what the
//! rest of the crate evaluates; every exponential factor is merged in log space
//! so they stay finite far into the bulk. The defining sums over skew-orthogonal
//! polynomials (`sum_kernel`) are kept as an independent oracle and are only
//! accurate for moderate |γ| and M.
//!
//! Root convention: a spectral point carries a root factor a(γ) with
//! a(γ)a(γ̄) = w(γ). With a = φ the sums give K_N; with a = Gin they give the
//! ψ-conjugated kernel K̃ directly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{
    self, ln_erfc, ln_factorial, ln_lower_gamma, remainder_log, scaled_exp_partial_log, sgn,
    GammaOrder, Scaled, FRAC_1_SQRT_2PI,
};

type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// A point of the configuration space. Conjugate pairs are represented by
/// their upper-half member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpectralPoint {
    Real(f64),
    UpperHalf(C64),
}

impl SpectralPoint {
    pub fn real(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::Invalid(format!("real point must be finite, got {x}")));
        }
        Ok(SpectralPoint::Real(x))
    }

    /// Requires Im z > 0 strictly.
    pub fn upper(z: C64) -> Result<Self> {
        if !(z.re.is_finite() && z.im.is_finite()) || !(z.im > 0.0) {
            return Err(Error::Invalid(format!(
                "upper-half point needs finite z with Im z > 0, got {z}"
            )));
        }
        Ok(SpectralPoint::UpperHalf(z))
    }

    pub fn value(&self) -> C64 {
        match *self {
            SpectralPoint::Real(x) => C64::new(x, 0.0),
            SpectralPoint::UpperHalf(z) => z,
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self, SpectralPoint::Real(_))
    }
}

/// The 2×2 kernel value {DS, S, S reversed, IS + E} at an ordered pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelBlock {
    pub ds: C64,
    pub s: C64,
    /// S with its arguments reversed.
    pub s_rev: C64,
    pub is_plus_e: C64,
}

impl KernelBlock {
    pub fn zero() -> Self {
        let z = C64::new(0.0, 0.0);
        KernelBlock { ds: z, s: z, s_rev: z, is_plus_e: z }
    }

    /// [[DS, S], [−S_rev, IS + E]].
    pub fn matrix(&self) -> [[C64; 2]; 2] {
        [[self.ds, self.s], [-self.s_rev, self.is_plus_e]]
    }

    /// Block at the reversed pair, equal to −matrix()ᵀ.
    pub fn reversed(&self) -> Self {
        KernelBlock {
            ds: -self.ds,
            s: self.s_rev,
            s_rev: self.s,
            is_plus_e: -self.is_plus_e,
        }
    }

    /// diag(l) · matrix · diag(r), returned in block form.
    pub fn conjugate_diag(&self, l: [C64; 2], r: [C64; 2]) -> Self {
        KernelBlock {
            ds: l[0] * self.ds * r[0],
            s: l[0] * self.s * r[1],
            s_rev: l[1] * self.s_rev * r[0],
            is_plus_e: l[1] * self.is_plus_e * r[1],
        }
    }

    pub fn entries(&self) -> [C64; 4] {
        [self.ds, self.s, self.s_rev, self.is_plus_e]
    }

    pub fn max_abs_diff(&self, other: &KernelBlock) -> f64 {
        self.entries()
            .iter()
            .zip(other.entries().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// π_{2m}(γ) = γ^{2m}, π_{2m+1}(γ) = γ^{2m+1} − 2mγ^{2m−1}.
pub fn skew_poly(n: usize, g: C64) -> C64 {
    let m = n / 2;
    if n % 2 == 0 {
        g.powu(2 * m as u32)
    } else if m == 0 {
        g
    } else {
        g.powu(2 * m as u32 + 1) - 2.0 * m as f64 * g.powu(2 * m as u32 - 1)
    }
}

/// Coefficients of π_n, lowest degree first.
pub fn skew_poly_coeffs(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    if n % 2 == 1 && n >= 3 {
        c[n - 2] = -((n - 1) as f64);
    }
    c
}

/// ln √erfc(√2|y|), the off-axis half of the Ginibre weight.
pub fn ln_sqrt_erfc(y: f64) -> f64 {
    0.5 * ln_erfc(std::f64::consts::SQRT_2 * y.abs())
}

/// Gin(γ) = e^{−γ²/2} √erfc(√2|Im γ|).
pub fn gin(g: C64) -> C64 {
    Scaled::exp(-g * g / 2.0 + ln_sqrt_erfc(g.im)).to_c64()
}

/// φ(γ) = e^{−(γ² + γ̄²)/4} √erfc(√2|Im γ|); real and positive.
pub fn phi(g: C64) -> f64 {
    (-(g.re * g.re - g.im * g.im) / 2.0 + ln_sqrt_erfc(g.im)).exp()
}

/// ψ(γ) = e^{(γ² − γ̄²)/4}, a unimodular phase.
pub fn psi(g: C64) -> C64 {
    C64::from_polar(1.0, g.re * g.im)
}

/// The real Ginibre weight w(γ) = Gin(γ)Gin(γ̄); e^{−x²} on ℝ.
pub fn gin_weight(g: C64) -> f64 {
    (-(g.re * g.re - g.im * g.im) + 2.0 * ln_sqrt_erfc(g.im)).exp()
}

/// ε applied to the weighted π_n at a real point.
pub fn eps_weighted_poly(n: usize, x: f64) -> f64 {
    let m = (n / 2) as u32;
    if n % 2 == 1 {
        return x.powi(2 * m as i32) * (-x * x / 2.0).exp();
    }
    if x == 0.0 {
        return 0.0;
    }
    let lg = ln_lower_gamma(GammaOrder::HalfInteger(m), x * x / 2.0).expect("nonnegative");
    -sgn(x) * ((m as f64 - 0.5) * std::f64::consts::LN_2 + lg).exp()
}

/// Root function used to weight polynomials in the sum construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Root {
    /// a = φ; the sums then give K_N.
    Phi,
    /// a = Gin; the sums then give K̃.
    Gin,
}

impl Root {
    pub fn eval(self, g: C64) -> C64 {
        match self {
            Root::Phi => C64::new(phi(g), 0.0),
            Root::Gin => gin(g),
        }
    }
}

/// ε applied to the weighted π_n at a non-real point: i·sgn(Im z)·π_n(z̄)a(z̄).
pub fn eps_weighted_poly_complex(n: usize, z: C64, root: Root) -> Result<C64> {
    if z.im == 0.0 {
        return Err(Error::Invalid("complex ε rule needs Im z ≠ 0".into()));
    }
    let zc = z.conj();
    Ok(I * sgn(z.im) * skew_poly(n, zc) * root.eval(zc))
}

fn weighted(n: usize, p: SpectralPoint, root: Root) -> C64 {
    let g = p.value();
    skew_poly(n, g) * root.eval(g)
}

fn eps_at(n: usize, p: SpectralPoint, root: Root) -> C64 {
    match p {
        SpectralPoint::Real(x) => C64::new(eps_weighted_poly(n, x), 0.0),
        SpectralPoint::UpperHalf(z) => eps_weighted_poly_complex(n, z, root).expect("Im z > 0"),
    }
}

/// E(γ, γ′) = ½sgn(γ − γ′) when both points are real, else 0.
pub fn e_term(p: SpectralPoint, q: SpectralPoint) -> f64 {
    match (p, q) {
        (SpectralPoint::Real(x), SpectralPoint::Real(y)) => 0.5 * sgn(x - y),
        _ => 0.0,
    }
}

/// Kernel from the defining sums over the skew-orthogonal family with
/// normalization 2√(2π)(2m)!. Reference implementation; plain double sums.
pub fn sum_kernel(m: u32, p: SpectralPoint, q: SpectralPoint, root: Root) -> KernelBlock {
    let mut ds = C64::new(0.0, 0.0);
    let mut s = ds;
    let mut s_rev = ds;
    let mut is = ds;
    for k in 0..m as usize {
        let f = (-ln_factorial(2 * k as u64)).exp();
        let (a0, a1) = (weighted(2 * k, p, root), weighted(2 * k + 1, p, root));
        let (b0, b1) = (weighted(2 * k, q, root), weighted(2 * k + 1, q, root));
        let (ea0, ea1) = (eps_at(2 * k, p, root), eps_at(2 * k + 1, p, root));
        let (eb0, eb1) = (eps_at(2 * k, q, root), eps_at(2 * k + 1, q, root));
        ds += f * (a0 * b1 - a1 * b0);
        s += f * (a0 * eb1 - a1 * eb0);
        s_rev += f * (b0 * ea1 - b1 * ea0);
        is += f * (ea0 * eb1 - ea1 * eb0);
    }
    let c = FRAC_1_SQRT_2PI;
    KernelBlock {
        ds: ds * c,
        s: s * c,
        s_rev: s_rev * c,
        is_plus_e: is * c + e_term(p, q),
    }
}

/// Removes the ψ phases: diag(1/ψ(γ), 1/ψ(γ̄)) K diag(1/ψ(γ′), 1/ψ(γ̄′)).
pub fn psi_deconjugate(k: &KernelBlock, p: SpectralPoint, q: SpectralPoint) -> KernelBlock {
    let (g, h) = (p.value(), q.value());
    k.conjugate_diag(
        [psi(g).inv(), psi(g.conj()).inv()],
        [psi(h).inv(), psi(h.conj()).inv()],
    )
}

/// D̂S_{2M}(z, z′) = (z′ − z) e_M(zz′).
pub fn hat_ds(m: u32, z: C64, zp: C64) -> C64 {
    let w = z * zp;
    scaled_exp_partial_log(m, w)
        .mul_exp(w)
        .mul_c(zp - z)
        .to_c64()
}

/// Ŝ_{2M}(z, x) = φ(x) e_M(zx) + r_M(z, x).
pub fn hat_s(m: u32, z: C64, x: f64) -> C64 {
    let w = z * x;
    scaled_exp_partial_log(m, w)
        .mul_exp(w - x * x / 2.0)
        .add(remainder_log(m, z, x))
        .to_c64()
}

/// e^{−(a−b)²/2} · e^{−ab} e_M(ab) in scaled form.
fn gauss_partial(m: u32, a: C64, b: C64) -> Scaled {
    let d = a - b;
    scaled_exp_partial_log(m, a * b).mul_exp(-d * d / 2.0)
}

/// e^{−z²/2} r_M(z, x).
fn damped_remainder(m: u32, z: C64, x: f64) -> Scaled {
    remainder_log(m, z, x).mul_exp(-z * z / 2.0)
}

/// The finite-sum form of ĨS at two real points, without the E term.
fn is_real_real(m: u32, x: f64, xp: f64) -> f64 {
    let half_sum = |a: f64, b: f64| -> f64 {
        // Σ_k 2^k/(2k)! γ(k+½, b²/2) sgn(b) a^{2k} e^{−a²/2}
        if b == 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        for k in 0..m {
            if a == 0.0 && k > 0 {
                break;
            }
            let lg = ln_lower_gamma(GammaOrder::HalfInteger(k), b * b / 2.0).expect("nonneg");
            let la = if k == 0 { 0.0 } else { 2.0 * k as f64 * a.abs().ln() };
            let ln = k as f64 * std::f64::consts::LN_2 - ln_factorial(2 * k as u64) + lg + la
                - a * a / 2.0;
            total += ln.exp();
        }
        sgn(b) * total
    };
    (half_sum(x, xp) - half_sum(xp, x)) / (2.0 * specfun::SQRT_PI)
}

/// Closed-form K̃_{2M}(γ, γ′) for every combination of real and upper-half
/// points. The point tag, not the size of Im, selects the formula.
pub fn kernel_tilde(m: u32, p: SpectralPoint, q: SpectralPoint) -> KernelBlock {
    assert!(m >= 1, "truncation index must be at least 1");
    let c = C64::new(FRAC_1_SQRT_2PI, 0.0);
    match (p, q) {
        (SpectralPoint::Real(x), SpectralPoint::Real(xp)) => {
            let (xc, xpc) = (C64::new(x, 0.0), C64::new(xp, 0.0));
            let s_of = |a: f64, b: f64| {
                let (ac, bc) = (C64::new(a, 0.0), C64::new(b, 0.0));
                let v = gauss_partial(m, ac, bc)
                    .add(damped_remainder(m, ac, b))
                    .mul_c(c)
                    .to_c64();
                C64::new(v.re, 0.0)
            };
            // Every real/real entry is real; drop the phase roundoff.
            KernelBlock {
                ds: C64::new(gauss_partial(m, xc, xpc).mul_c(c * (xp - x)).to_c64().re, 0.0),
                s: s_of(x, xp),
                s_rev: s_of(xp, x),
                is_plus_e: C64::new(is_real_real(m, x, xp) + 0.5 * sgn(x - xp), 0.0),
            }
        }
        (SpectralPoint::UpperHalf(z), SpectralPoint::UpperHalf(zp)) => {
            let pp = Scaled::exp(C64::new(ln_sqrt_erfc(z.im) + ln_sqrt_erfc(zp.im), 0.0)).mul_c(c);
            let (zc, zpc) = (z.conj(), zp.conj());
            KernelBlock {
                ds: gauss_partial(m, z, zp).mul(pp).mul_c(zp - z).to_c64(),
                s: gauss_partial(m, z, zpc).mul(pp).mul_c(I * (zpc - z)).to_c64(),
                s_rev: gauss_partial(m, zp, zc).mul(pp).mul_c(I * (zc - zp)).to_c64(),
                is_plus_e: gauss_partial(m, zc, zpc).mul(pp).mul_c(zc - zpc).to_c64(),
            }
        }
        (SpectralPoint::Real(x), SpectralPoint::UpperHalf(z)) => real_complex(m, x, z),
        (SpectralPoint::UpperHalf(z), SpectralPoint::Real(x)) => real_complex(m, x, z).reversed(),
    }
}

fn real_complex(m: u32, x: f64, z: C64) -> KernelBlock {
    let q = Scaled::exp(C64::new(ln_sqrt_erfc(z.im), 0.0)).mul_c(C64::new(FRAC_1_SQRT_2PI, 0.0));
    let xc = C64::new(x, 0.0);
    let zc = z.conj();
    KernelBlock {
        ds: gauss_partial(m, xc, z).mul(q).mul_c(z - x).to_c64(),
        s: gauss_partial(m, xc, zc).mul(q).mul_c(I * (zc - x)).to_c64(),
        s_rev: gauss_partial(m, xc, z)
            .add(damped_remainder(m, z, x))
            .mul(q)
            .to_c64(),
        is_plus_e: gauss_partial(m, xc, zc)
            .add(damped_remainder(m, zc, x))
            .mul(q)
            .mul_c(-I)
            .to_c64(),
    }
}
