//! Special functions for the Ginibre kernel.
//!
//! erf/erfc use a positive-term series below 1.25 and the even continued
//! fraction of Γ(1/2, x²) above. Incomplete gammas are restricted to integer
//! and half-integer orders. Truncated exponential sums are always returned
//! multiplied by e^{−w} and, internally, in a mantissa/log-scale form so
//! callers can merge exponential prefactors before anything is exponentiated.

use std::cell::Cell;
use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

type C64 = Complex64;

pub const SQRT_PI: f64 = 1.772_453_850_905_516;
/// 1/√(2π).
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const ERF_SERIES_LIMIT: f64 = 1.25;

thread_local! {
    static FLIP_REMAINDER: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with the sign of the remainder term r_M inverted on this thread.
/// Mutation hook for the self-test; has no effect on other threads.
pub fn with_flipped_remainder<T>(f: impl FnOnce() -> T) -> T {
    struct Reset(bool);
    impl Drop for Reset {
        fn drop(&mut self) {
            FLIP_REMAINDER.with(|c| c.set(self.0));
        }
    }
    let prev = FLIP_REMAINDER.with(|c| c.replace(true));
    let _reset = Reset(prev);
    f()
}

fn remainder_sign() -> f64 {
    if FLIP_REMAINDER.with(|c| c.get()) {
        -1.0
    } else {
        1.0
    }
}

/// sgn with sgn(0) = 0.
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Error function family

/// erf(x) = (2/√π) x e^{−x²} Σ (2x²)^n / (1·3···(2n+1)); all terms positive.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    2.0 / SQRT_PI * x * (-x2).exp() * sum
}

/// e^{x²} erfc(x) for x ≥ ERF_SERIES_LIMIT via the continued fraction of
/// Γ(1/2, x²), evaluated with the modified Lentz method.
fn erfcx_cf(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let y = x * x;
    let a = 0.5;
    let mut b = y + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..2000 {
        let fi = i as f64;
        let an = -fi * (fi - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    x * h / SQRT_PI
}

/// e^{−x²} with the square split so that the dominant part is exact.
fn exp_neg_square(x: f64) -> f64 {
    let hi = (x * 16.0).trunc() / 16.0;
    let lo = x - hi;
    (-hi * hi).exp() * (-lo * (x + hi)).exp()
}

pub fn erf(x: f64) -> f64 {
    if x.abs() < ERF_SERIES_LIMIT {
        erf_series(x)
    } else {
        sgn(x) * (1.0 - erfc(x.abs()))
    }
}

/// Complementary error function with relative error near 1e−15 for |x| ≤ 10.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < ERF_SERIES_LIMIT {
        return 1.0 - erf_series(x);
    }
    if x > 27.3 {
        return 0.0;
    }
    exp_neg_square(x) * erfcx_cf(x)
}

/// Scaled complementary error function e^{x²} erfc(x).
pub fn erfcx(x: f64) -> f64 {
    if x < ERF_SERIES_LIMIT {
        if x < -26.0 {
            return f64::INFINITY;
        }
        return (x * x).exp() * erfc(x);
    }
    erfcx_cf(x)
}

/// ln erfc(x), finite for all finite x.
pub fn ln_erfc(x: f64) -> f64 {
    if x < ERF_SERIES_LIMIT {
        erfc(x).ln()
    } else {
        -x * x + erfcx_cf(x).ln()
    }
}

// ---------------------------------------------------------------------------
// Gamma functions of integer and half-integer order

/// Order of an incomplete gamma function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaOrder {
    /// m + 1/2.
    HalfInteger(u32),
    /// n ≥ 1.
    Integer(u32),
}

impl GammaOrder {
    pub fn value(self) -> f64 {
        match self {
            GammaOrder::HalfInteger(m) => m as f64 + 0.5,
            GammaOrder::Integer(n) => n as f64,
        }
    }

    /// Order k/2 for a positive integer k.
    pub fn from_half_units(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::Invalid("gamma order must be positive".into()));
        }
        Ok(if k % 2 == 0 {
            GammaOrder::Integer(k / 2)
        } else {
            GammaOrder::HalfInteger(k / 2)
        })
    }

    fn validate(self) -> Result<()> {
        match self {
            GammaOrder::Integer(0) => Err(Error::Invalid("integer gamma order must be ≥ 1".into())),
            _ => Ok(()),
        }
    }
}

/// ln n!, exact products up to 20 and the Stirling series beyond.
pub fn ln_factorial(n: u64) -> f64 {
    if n <= 20 {
        let mut p = 1.0f64;
        for k in 2..=n {
            p *= k as f64;
        }
        return p.ln();
    }
    let x = n as f64 + 1.0;
    let x2 = x * x;
    let series = 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2) + 1.0 / (1260.0 * x * x2 * x2)
        - 1.0 / (1680.0 * x * x2 * x2 * x2);
    (x - 0.5) * x.ln() - x + LN_SQRT_2PI + series
}

pub fn ln_gamma(a: GammaOrder) -> f64 {
    match a {
        GammaOrder::Integer(n) => ln_factorial(n as u64 - 1),
        GammaOrder::HalfInteger(m) => {
            // Γ(m + 1/2) = (2m)! √π / (4^m m!)
            let m = m as u64;
            ln_factorial(2 * m) - 2.0 * m as f64 * LN_2 - ln_factorial(m) + 0.5 * PI.ln()
        }
    }
}

/// Complete gamma function at an integer or half-integer order.
pub fn gamma(a: GammaOrder) -> f64 {
    match a {
        GammaOrder::Integer(n) if n <= 21 => (2..n).fold(1.0, |p, k| p * k as f64),
        GammaOrder::HalfInteger(m) if m <= 20 => {
            (0..m).fold(SQRT_PI, |p, k| p * (k as f64 + 0.5))
        }
        _ => ln_gamma(a).exp(),
    }
}

/// Σ_{k≥0} x^k / ((a+1)(a+2)···(a+k)).
fn lower_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut ak = a;
    for _ in 0..100_000 {
        ak += 1.0;
        term *= x / ak;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn check_x(x: f64) -> Result<()> {
    if !(x >= 0.0) {
        return Err(Error::Invalid(format!(
            "incomplete gamma argument must be nonnegative, got {x}"
        )));
    }
    Ok(())
}

/// Regularized upper tail Q(a, x) = Γ(a, x)/Γ(a) for x ≥ a, as a finite sum
/// of positive terms.
fn regularized_upper_finite(a: GammaOrder, x: f64) -> f64 {
    let lx = x.ln();
    match a {
        GammaOrder::HalfInteger(m) => {
            let mut q = erfc(x.sqrt());
            for k in 0..m {
                let order = GammaOrder::HalfInteger(k + 1);
                q += ((k as f64 + 0.5) * lx - x - ln_gamma(order)).exp();
            }
            q
        }
        GammaOrder::Integer(n) => (0..n)
            .map(|k| (k as f64 * lx - x - ln_factorial(k as u64)).exp())
            .sum(),
    }
}

/// Regularized lower part P(a, x) = γ(a, x)/Γ(a).
pub fn regularized_lower_gamma(a: GammaOrder, x: f64) -> Result<f64> {
    a.validate()?;
    check_x(x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    let av = a.value();
    if x < av {
        let pre = (av * x.ln() - x - ln_gamma(a) - av.ln()).exp();
        Ok(pre * lower_series(av, x))
    } else {
        Ok(1.0 - regularized_upper_finite(a, x))
    }
}

/// Regularized upper part Q(a, x) = Γ(a, x)/Γ(a).
pub fn regularized_upper_gamma(a: GammaOrder, x: f64) -> Result<f64> {
    a.validate()?;
    check_x(x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x < a.value() {
        Ok(1.0 - regularized_lower_gamma(a, x)?)
    } else {
        Ok(regularized_upper_finite(a, x))
    }
}

/// γ(a, x) = ∫₀ˣ t^{a−1} e^{−t} dt.
///
/// For x below the order the power series is used; otherwise half-integer
/// orders climb from γ(1/2, x) = √π erf(√x) by γ(a+1, x) = aγ(a, x) − x^a e^{−x}
/// and integer orders use (n−1)!(1 − e^{−x} Σ_{k<n} x^k/k!).
pub fn lower_gamma(a: GammaOrder, x: f64) -> Result<f64> {
    a.validate()?;
    check_x(x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    let av = a.value();
    if x < av {
        let pre = (av * x.ln() - x).exp() / av;
        return Ok(pre * lower_series(av, x));
    }
    match a {
        GammaOrder::HalfInteger(m) => {
            let lx = x.ln();
            let mut g = SQRT_PI * erf(x.sqrt());
            for k in 0..m {
                let ak = k as f64 + 0.5;
                g = ak * g - (ak * lx - x).exp();
            }
            Ok(g)
        }
        GammaOrder::Integer(_) => Ok(gamma(a) * (1.0 - regularized_upper_finite(a, x))),
    }
}

/// Γ(a, x) = Γ(a) − γ(a, x).
///
/// For x at or above the order, half-integer orders climb from
/// Γ(1/2, x) = √π erfc(√x) by Γ(a+1, x) = aΓ(a, x) + x^a e^{−x}.
pub fn upper_gamma(a: GammaOrder, x: f64) -> Result<f64> {
    a.validate()?;
    check_x(x)?;
    if x < a.value() {
        return Ok(gamma(a) - lower_gamma(a, x)?);
    }
    match a {
        GammaOrder::HalfInteger(m) => {
            let lx = x.ln();
            let mut g = SQRT_PI * erfc(x.sqrt());
            for k in 0..m {
                let ak = k as f64 + 0.5;
                g = ak * g + (ak * lx - x).exp();
            }
            Ok(g)
        }
        GammaOrder::Integer(_) => Ok(gamma(a) * regularized_upper_finite(a, x)),
    }
}

/// ln γ(a, x); −∞ at x = 0. Safe where γ itself under- or overflows.
pub fn ln_lower_gamma(a: GammaOrder, x: f64) -> Result<f64> {
    a.validate()?;
    check_x(x)?;
    if x == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let av = a.value();
    if x < av {
        Ok(av * x.ln() - x - av.ln() + lower_series(av, x).ln())
    } else {
        Ok(ln_gamma(a) + (1.0 - regularized_upper_finite(a, x)).ln())
    }
}

// ---------------------------------------------------------------------------
// Values carried as mantissa × e^{log_scale}

/// A complex number stored as `mantissa · exp(log_scale)` with |mantissa| = 1
/// (or mantissa = 0 for an exact zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub mantissa: C64,
    pub log_scale: f64,
}

impl Scaled {
    pub const ZERO: Scaled = Scaled {
        mantissa: C64 { re: 0.0, im: 0.0 },
        log_scale: 0.0,
    };
    pub const ONE: Scaled = Scaled {
        mantissa: C64 { re: 1.0, im: 0.0 },
        log_scale: 0.0,
    };

    pub fn new(c: C64) -> Scaled {
        Scaled {
            mantissa: c,
            log_scale: 0.0,
        }
        .normalized()
    }

    /// e^{z}.
    pub fn exp(z: C64) -> Scaled {
        Scaled {
            mantissa: C64::from_polar(1.0, z.im),
            log_scale: z.re,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.re == 0.0 && self.mantissa.im == 0.0
    }

    fn normalized(self) -> Scaled {
        let r = self.mantissa.norm();
        if r == 0.0 || !r.is_finite() {
            if r == 0.0 {
                return Scaled::ZERO;
            }
            return self;
        }
        Scaled {
            mantissa: self.mantissa / r,
            log_scale: self.log_scale + r.ln(),
        }
    }

    pub fn mul(self, o: Scaled) -> Scaled {
        if self.is_zero() || o.is_zero() {
            return Scaled::ZERO;
        }
        Scaled {
            mantissa: self.mantissa * o.mantissa,
            log_scale: self.log_scale + o.log_scale,
        }
        .normalized()
    }

    pub fn mul_c(self, c: C64) -> Scaled {
        self.mul(Scaled::new(c))
    }

    /// self · e^{z}.
    pub fn mul_exp(self, z: C64) -> Scaled {
        if self.is_zero() {
            return self;
        }
        self.mul(Scaled::exp(z))
    }

    pub fn add(self, o: Scaled) -> Scaled {
        if self.is_zero() {
            return o;
        }
        if o.is_zero() {
            return self;
        }
        let (big, small) = if self.log_scale >= o.log_scale {
            (self, o)
        } else {
            (o, self)
        };
        let rel = (small.log_scale - big.log_scale).exp();
        Scaled {
            mantissa: big.mantissa + small.mantissa * rel,
            log_scale: big.log_scale,
        }
        .normalized()
    }

    pub fn neg(self) -> Scaled {
        Scaled {
            mantissa: -self.mantissa,
            log_scale: self.log_scale,
        }
    }

    pub fn to_c64(self) -> C64 {
        if self.is_zero() {
            return C64::new(0.0, 0.0);
        }
        self.mantissa * self.log_scale.exp()
    }
}

// ---------------------------------------------------------------------------
// Truncated exponential sums

/// Degree 2M − 2 of the truncated exponential e_M.
fn degree(m: u32) -> u64 {
    2 * m as u64 - 2
}

/// e^{−w} e_M(w) in scaled form, where e_M(w) = Σ_{k=0}^{2M−2} w^k/k!.
///
/// Inside the disk |w| ≤ 2M − 1 the result is 1 minus the convergent tail
/// e^{−w} Σ_{k>K} w^k/k!; outside it is the head summed backwards from its
/// largest term. Neither branch forms e^{w} or e_M(w) separately.
pub fn scaled_exp_partial_log(m: u32, w: C64) -> Scaled {
    assert!(m >= 1, "truncation index must be at least 1");
    if w.re == 0.0 && w.im == 0.0 {
        return Scaled::ONE;
    }
    let k = degree(m);
    let kf = k as f64;
    let lw = w.ln();
    if w.norm() <= kf + 1.0 {
        // tail = e^{−w} w^{K+1}/(K+1)! · Σ_j w^j / ((K+2)···(K+1+j))
        let mut term = C64::new(1.0, 0.0);
        let mut sum = C64::new(1.0, 0.0);
        let mut denom = kf + 1.0;
        for _ in 0..100_000 {
            denom += 1.0;
            term *= w / denom;
            sum += term;
            if term.norm() < 1e-17 * sum.norm() {
                break;
            }
        }
        let tail = Scaled::exp(-w + (kf + 1.0) * lw - C64::new(ln_factorial(k + 1), 0.0))
            .mul_c(sum);
        Scaled::ONE.add(tail.neg())
    } else {
        // head = e^{−w} w^K/K! · Σ_{j=0}^{K} K!/((K−j)! w^j)
        let mut term = C64::new(1.0, 0.0);
        let mut sum = C64::new(1.0, 0.0);
        for j in 0..k {
            term *= (kf - j as f64) / w;
            sum += term;
            if term.norm() < 1e-17 * sum.norm() {
                break;
            }
        }
        Scaled::exp(-w + kf * lw - C64::new(ln_factorial(k), 0.0)).mul_c(sum)
    }
}

/// e^{−w} e_M(w).
pub fn scaled_exp_partial(m: u32, w: C64) -> C64 {
    scaled_exp_partial_log(m, w).to_c64()
}

/// e^{−w} c_M(w), where c_M keeps the even-degree terms of e_M.
pub fn scaled_even_partial(m: u32, w: C64) -> C64 {
    let (even, _) = split_parity(m, w);
    even.to_c64()
}

/// e^{−w} s_M(w), where s_M keeps the odd-degree terms of e_M.
pub fn scaled_odd_partial(m: u32, w: C64) -> C64 {
    let (_, odd) = split_parity(m, w);
    odd.to_c64()
}

/// c_M(w) = (e_M(w) + e_M(−w))/2 and s_M(w) = (e_M(w) − e_M(−w))/2; the
/// degree 2M − 2 is even, so e_M(−w) is the same truncation at −w.
fn split_parity(m: u32, w: C64) -> (Scaled, Scaled) {
    let plus = scaled_exp_partial_log(m, w);
    let minus = scaled_exp_partial_log(m, -w).mul_exp(-2.0 * w);
    let half = C64::new(0.5, 0.0);
    (
        plus.add(minus).mul_c(half),
        plus.add(minus.neg()).mul_c(half),
    )
}

/// e_M(w) by direct summation; intended for small |w|.
pub fn exp_partial(m: u32, w: C64) -> C64 {
    let mut term = C64::new(1.0, 0.0);
    let mut sum = term;
    for k in 1..=degree(m) {
        term *= w / k as f64;
        sum += term;
    }
    sum
}

/// r_M(z, x) = 2^{M−3/2}/(2M−2)! · sgn(x) z^{2M−1} γ(M − 1/2, x²/2), scaled.
pub fn remainder_log(m: u32, z: C64, x: f64) -> Scaled {
    assert!(m >= 1, "truncation index must be at least 1");
    if x == 0.0 || (z.re == 0.0 && z.im == 0.0) {
        return Scaled::ZERO;
    }
    let order = GammaOrder::HalfInteger(m - 1);
    let lg = ln_lower_gamma(order, 0.5 * x * x).expect("nonnegative argument");
    let mf = m as f64;
    let log_mag = (mf - 1.5) * LN_2 - ln_factorial(degree(m)) + lg;
    let power = (2.0 * mf - 1.0) * z.ln();
    Scaled::exp(power + C64::new(log_mag, 0.0)).mul_c(C64::new(sgn(x) * remainder_sign(), 0.0))
}

pub fn remainder(m: u32, z: C64, x: f64) -> C64 {
    remainder_log(m, z, x).to_c64()
}

/// Upper bound |z|^{2M−1} 2^{−M+3/2} √π / (Γ(M−1)(2M−2)) for M ≥ 2.
pub fn remainder_bound(m: u32, z: C64) -> f64 {
    assert!(m >= 2, "bound requires M ≥ 2");
    let mf = m as f64;
    let ln = (2.0 * mf - 1.0) * z.norm().ln() + (-mf + 1.5) * LN_2 + 0.5 * PI.ln()
        - ln_factorial(m as u64 - 2)
        - (2.0 * mf - 2.0).ln();
    ln.exp()
}
