//! Correlation functions as block Pfaffians.
//!
//! A weight ρ enters the real-axis integrals as ρ(x) and the off-axis
//! integrals as the pair weight ρ(z)ρ(z̄). The skew form is
//! ⟨g|h⟩ = ∫∫ ρ(x)ρ(y) g(x)h(y) sgn(y − x) − 4∫_H ρ(z)ρ(z̄) Im(g(z) conj h(z)),
//! which for real polynomials is what the ε rules (½sgn on ℝ, i·sgn(Im)·conj
//! off ℝ) give. Generic kernels use the real positive root √(ρ(z)ρ(z̄)) off
//! the axis; for the Ginibre weight that root is φ and the kernel is K_N.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ginibre_kernel::{gin_weight, kernel_tilde, skew_poly_coeffs, KernelBlock, SpectralPoint};
use crate::hermitian::HermitianKernel;
use crate::limits::{bulk_scaled_block, kernel_limit, BulkScaling, Offset};
use crate::quad::{integrate_breaks, integrate_upper_half, InnerStatus, QuadOptions, QuadResult};
use crate::skewalg::{pfaffian, pfaffian_report, BlockKernelMatrix, SkewMatrix};
use crate::specfun::sgn;

type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

// ---------------------------------------------------------------------------
// Polynomials and bases

/// Real polynomial, coefficients lowest degree first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Poly { coeffs }
    }

    pub fn monomial(n: usize) -> Self {
        let mut c = vec![0.0; n + 1];
        c[n] = 1.0;
        Poly { coeffs: c }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_monic(&self) -> bool {
        *self.coeffs.last().unwrap() == 1.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_c(&self, z: C64) -> C64 {
        self.coeffs
            .iter()
            .rev()
            .fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() == 1 {
            return Poly::new(vec![0.0]);
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }
}

/// A monic family q_0, …, q_{N−1} with deg q_n = n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Basis {
    Monomial,
    /// The Ginibre skew-orthogonal family π_n.
    SkewGinibre,
    Custom(Vec<Poly>),
}

impl Basis {
    pub fn polys(&self, n: usize) -> Result<Vec<Poly>> {
        match self {
            Basis::Monomial => Ok((0..n).map(Poly::monomial).collect()),
            Basis::SkewGinibre => Ok((0..n).map(|k| Poly::new(skew_poly_coeffs(k))).collect()),
            Basis::Custom(ps) => {
                if ps.len() < n {
                    return Err(Error::DimensionMismatch(format!(
                        "basis has {} polynomials, need {n}",
                        ps.len()
                    )));
                }
                for (k, p) in ps.iter().take(n).enumerate() {
                    if p.degree() != k || !p.is_monic() {
                        return Err(Error::Invalid(format!(
                            "basis polynomial {k} must be monic of degree {k}"
                        )));
                    }
                }
                Ok(ps[..n].to_vec())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Weights

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type PairFn = Arc<dyn Fn(C64) -> f64 + Send + Sync>;

/// A user-supplied weight: ρ on ℝ and the pair weight ρ(z)ρ(z̄) off ℝ.
#[derive(Clone)]
pub struct CustomWeight {
    pub name: String,
    pub real: RealFn,
    pub pair: PairFn,
    /// Points on ℝ where ρ is not smooth.
    pub real_breaks: Vec<f64>,
    /// Radii of circles where the pair weight is not smooth.
    pub radii: Vec<f64>,
}

#[derive(Clone)]
pub enum WeightSpec {
    Ginibre,
    /// ρ(γ) = max(1, |γ|)^{−s}.
    Mahler { s: f64 },
    Custom(CustomWeight),
}

impl fmt::Debug for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::Ginibre => write!(f, "Ginibre"),
            WeightSpec::Mahler { s } => write!(f, "Mahler(s = {s})"),
            WeightSpec::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

impl WeightSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            WeightSpec::Mahler { s } if !(s > n as f64) || !s.is_finite() => Err(Error::Invalid(
                format!("Mahler exponent must exceed N = {n}, got {s}"),
            )),
            _ => Ok(()),
        }
    }

    /// ρ(x) on the real axis.
    pub fn real(&self, x: f64) -> f64 {
        match self {
            WeightSpec::Ginibre => (-x * x / 2.0).exp(),
            WeightSpec::Mahler { s } => x.abs().max(1.0).powf(-s),
            WeightSpec::Custom(c) => (c.real)(x),
        }
    }

    /// ρ(z)ρ(z̄) off the real axis.
    pub fn pair(&self, z: C64) -> f64 {
        match self {
            WeightSpec::Ginibre => gin_weight(z),
            WeightSpec::Mahler { s } => z.norm().max(1.0).powf(-2.0 * s),
            WeightSpec::Custom(c) => (c.pair)(z),
        }
    }

    /// Root used off the axis: √(ρ(z)ρ(z̄)).
    pub fn complex_root(&self, z: C64) -> f64 {
        self.pair(z).sqrt()
    }

    fn kinks(&self) -> Vec<f64> {
        match self {
            WeightSpec::Ginibre => vec![0.0],
            WeightSpec::Mahler { .. } => vec![-1.0, 1.0],
            WeightSpec::Custom(c) => c.real_breaks.clone(),
        }
    }

    fn radii(&self) -> Vec<f64> {
        match self {
            WeightSpec::Ginibre => vec![],
            WeightSpec::Mahler { .. } => vec![1.0],
            WeightSpec::Custom(c) => c.radii.clone(),
        }
    }

    /// Breakpoints covering ℝ, including the infinite ends and `extra`.
    pub fn real_breaks(&self, extra: &[f64]) -> Vec<f64> {
        let mut b = vec![f64::NEG_INFINITY, f64::INFINITY];
        b.extend(self.kinks());
        b.extend(extra.iter().copied().filter(|v| v.is_finite()));
        b
    }

    /// Interior y breakpoints at abscissa x for the off-axis integrals.
    pub fn y_breaks(&self, x: f64) -> Vec<f64> {
        self.radii()
            .into_iter()
            .filter(|&r| r > x.abs())
            .map(|r| (r * r - x * x).sqrt())
            .collect()
    }

    /// x breakpoints for the off-axis integrals.
    pub fn x_breaks(&self) -> Vec<f64> {
        let mut b = vec![f64::NEG_INFINITY, 0.0, f64::INFINITY];
        for r in self.radii() {
            b.push(-r);
            b.push(r);
        }
        b
    }
}

// ---------------------------------------------------------------------------
// Skew product

fn loose() -> QuadOptions {
    QuadOptions::with_tol(0.0, 1e-4)
}

/// ∫ ρ |p| over ℝ, used only as a scale for absolute tolerances.
fn real_scale(w: &WeightSpec, p: &Poly) -> f64 {
    integrate_breaks(|x| w.real(x) * p.eval(x).abs(), &w.real_breaks(&[]), &loose()).value
}

/// ∫_x^∞ ρ(y) p(y) dy.
fn tail(w: &WeightSpec, p: &Poly, x: f64, abs_tol: f64) -> QuadResult {
    let mut b: Vec<f64> = w.kinks().into_iter().filter(|&k| k > x).collect();
    b.push(x);
    b.push(f64::INFINITY);
    let o = QuadOptions::with_tol(abs_tol, 1e-14);
    integrate_breaks(|y| w.real(y) * p.eval(y), &b, &o)
}

/// ∫_{−∞}^x ρ(y) p(y) dy.
fn head(w: &WeightSpec, p: &Poly, x: f64, abs_tol: f64) -> QuadResult {
    let mut b: Vec<f64> = w.kinks().into_iter().filter(|&k| k < x).collect();
    b.push(x);
    b.push(f64::NEG_INFINITY);
    let o = QuadOptions::with_tol(abs_tol, 1e-14);
    integrate_breaks(|y| w.real(y) * p.eval(y), &b, &o)
}

/// ε(ρq)(x) = ½∫ ρ(y) q(y) sgn(y − x) dy.
pub fn eps_real(w: &WeightSpec, q: &Poly, x: f64) -> Result<f64> {
    let scale = real_scale(w, q);
    let t = tail(w, q, x, 1e-16 * scale).into_result()?;
    let h = head(w, q, x, 1e-16 * scale).into_result()?;
    Ok(0.5 * (t - h))
}

/// Real-axis part ∫∫ ρ(x)ρ(y) g(x)h(y) sgn(y − x).
pub fn skew_product_real(w: &WeightSpec, g: &Poly, h: &Poly) -> Result<f64> {
    let (sg, sh) = (real_scale(w, g), real_scale(w, h));
    let status = InnerStatus::default();
    let outer = integrate_breaks(
        |x| {
            let rx = w.real(x);
            if rx == 0.0 {
                return 0.0;
            }
            let th = status.record(&tail(w, h, x, 1e-16 * sh));
            let tg = status.record(&tail(w, g, x, 1e-16 * sg));
            rx * (g.eval(x) * th - h.eval(x) * tg)
        },
        &w.real_breaks(&[]),
        &QuadOptions::with_tol(1e-15 * sg * sh, 1e-12),
    );
    status.finish(outer).into_result()
}

/// Off-axis part −4∫_H ρ(z)ρ(z̄) Im(g(z) conj h(z)).
pub fn skew_product_complex(w: &WeightSpec, g: &Poly, h: &Poly) -> Result<f64> {
    let scale = 4.0
        * integrate_upper_half(
            |x, y| {
                let z = C64::new(x, y);
                w.pair(z) * g.eval_c(z).norm() * h.eval_c(z).norm()
            },
            &w.x_breaks(),
            |x| w.y_breaks(x),
            &loose(),
        )
        .value;
    let r = integrate_upper_half(
        |x, y| {
            let z = C64::new(x, y);
            let pw = w.pair(z);
            if pw == 0.0 {
                return 0.0;
            }
            -4.0 * pw * (g.eval_c(z) * h.eval_c(z).conj()).im
        },
        &w.x_breaks(),
        |x| w.y_breaks(x),
        &QuadOptions::with_tol(1e-15 * scale, 1e-12),
    );
    r.into_result()
}

/// ⟨g|h⟩ by adaptive quadrature.
pub fn skew_product(w: &WeightSpec, g: &Poly, h: &Poly) -> Result<f64> {
    Ok(skew_product_real(w, g, h)? + skew_product_complex(w, g, h)?)
}

// ---------------------------------------------------------------------------
// Gram matrix, partition function, generic kernel

/// Skew Gram matrix U = [⟨q_n|q_n′⟩] and μ = U^{−T}.
#[derive(Debug, Clone)]
pub struct SkewGram {
    n: usize,
    weight: WeightSpec,
    basis: Vec<Poly>,
    u: SkewMatrix,
    mu: DMatrix<f64>,
}

pub fn build_gram(w: &WeightSpec, n: usize, basis: &Basis) -> Result<SkewGram> {
    if n == 0 || n % 2 == 1 {
        return Err(Error::Invalid(format!("N must be even and positive, got {n}")));
    }
    w.validate(n)?;
    let polys = basis.polys(n)?;
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let values: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| skew_product(w, &polys[i], &polys[j]))
        .collect();
    let mut upper = DMatrix::<f64>::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        let v = v?;
        upper[(i, j)] = v;
        upper[(j, i)] = -v;
    }
    let u = SkewMatrix::from_upper(n, |i, j| C64::new(upper[(i, j)], 0.0))?;
    let inv = upper
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("skew Gram matrix is not invertible".into()))?;
    let mu_raw = inv.transpose();
    // Exact antisymmetry keeps diagonal kernel blocks exactly skew.
    let mu = (&mu_raw - mu_raw.transpose()) * 0.5;
    let resid = (&upper * mu.transpose() - DMatrix::<f64>::identity(n, n)).amax();
    if !(resid <= 1e-8) {
        return Err(Error::Singular(format!(
            "skew Gram matrix is ill conditioned: |U μᵀ − I| = {resid:e}"
        )));
    }
    Ok(SkewGram {
        n,
        weight: w.clone(),
        basis: polys,
        u,
        mu,
    })
}

/// Values of q̃_n and ε q̃_n at one point.
#[derive(Debug, Clone)]
pub struct PointData {
    pub point: SpectralPoint,
    pub tilde: Vec<C64>,
    pub eps: Vec<C64>,
}

impl SkewGram {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self) -> &WeightSpec {
        &self.weight
    }

    pub fn basis(&self) -> &[Poly] {
        &self.basis
    }

    pub fn u(&self) -> &SkewMatrix {
        &self.u
    }

    pub fn mu(&self) -> &DMatrix<f64> {
        &self.mu
    }

    /// Pf U.
    pub fn pfaffian(&self) -> f64 {
        pfaffian(&self.u).re
    }

    pub fn point_data(&self, p: SpectralPoint) -> Result<PointData> {
        let w = &self.weight;
        match p {
            SpectralPoint::Real(x) => {
                let rx = w.real(x);
                let mut tilde = Vec::with_capacity(self.n);
                let mut eps = Vec::with_capacity(self.n);
                for q in &self.basis {
                    tilde.push(C64::new(q.eval(x) * rx, 0.0));
                    eps.push(C64::new(eps_real(w, q, x)?, 0.0));
                }
                Ok(PointData { point: p, tilde, eps })
            }
            SpectralPoint::UpperHalf(z) => {
                let zc = z.conj();
                let (a, ac) = (w.complex_root(z), w.complex_root(zc));
                let tilde = self.basis.iter().map(|q| q.eval_c(z) * a).collect();
                let eps = self.basis.iter().map(|q| I * q.eval_c(zc) * ac).collect();
                Ok(PointData { point: p, tilde, eps })
            }
        }
    }

    /// Kernel block from precomputed point data.
    pub fn block(&self, a: &PointData, b: &PointData) -> KernelBlock {
        let form = |u: &[C64], v: &[C64]| -> C64 {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..self.n {
                for j in 0..self.n {
                    let m = self.mu[(i, j)];
                    if m != 0.0 {
                        acc += m * u[i] * v[j];
                    }
                }
            }
            2.0 * acc
        };
        let e = match (a.point, b.point) {
            (SpectralPoint::Real(x), SpectralPoint::Real(y)) => 0.5 * sgn(x - y),
            _ => 0.0,
        };
        KernelBlock {
            ds: form(&a.tilde, &b.tilde),
            s: form(&a.tilde, &b.eps),
            s_rev: form(&b.tilde, &a.eps),
            is_plus_e: form(&a.eps, &b.eps) + e,
        }
    }
}

/// K_N(γ, γ′) built from a Gram matrix by quadrature of ε on ℝ.
pub fn generic_kernel(gram: &SkewGram, p: SpectralPoint, q: SpectralPoint) -> Result<KernelBlock> {
    Ok(gram.block(&gram.point_data(p)?, &gram.point_data(q)?))
}

/// Z = Pf U in the monomial basis.
pub fn partition_fn(w: &WeightSpec, n: usize) -> Result<f64> {
    partition_fn_with_basis(w, n, &Basis::Monomial)
}

pub fn partition_fn_with_basis(w: &WeightSpec, n: usize, basis: &Basis) -> Result<f64> {
    let z = build_gram(w, n, basis)?.pfaffian();
    if !(z > 0.0) {
        return Err(Error::Negative(z));
    }
    Ok(z)
}

/// Volume of the Mahler-measure star body of degree-N real polynomials,
/// 2/(N+1) times the partition function at exponent N + 1.
pub fn mahler_star_volume(n: usize) -> Result<f64> {
    let z = partition_fn(&WeightSpec::Mahler { s: n as f64 + 1.0 }, n)?;
    Ok(2.0 / (n as f64 + 1.0) * z)
}

// ---------------------------------------------------------------------------
// Correlation functions

/// ℓ real points and m upper-half points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Configuration {
    pub xs: Vec<f64>,
    pub zs: Vec<C64>,
}

impl Configuration {
    pub fn new(xs: Vec<f64>, zs: Vec<C64>) -> Result<Self> {
        for &x in &xs {
            SpectralPoint::real(x)?;
        }
        for &z in &zs {
            SpectralPoint::upper(z)?;
        }
        Ok(Configuration { xs, zs })
    }

    /// Real and complex offsets for a bulk model. Offsets need only be
    /// finite; the model checks that the shifted points stay in the upper
    /// half plane.
    pub fn offsets(xs: Vec<f64>, zs: Vec<C64>) -> Result<Self> {
        if xs.iter().any(|x| !x.is_finite()) || zs.iter().any(|z| !z.is_finite()) {
            return Err(Error::Invalid("offsets must be finite".into()));
        }
        Ok(Configuration { xs, zs })
    }

    pub fn ell(&self) -> usize {
        self.xs.len()
    }

    pub fn m(&self) -> usize {
        self.zs.len()
    }

    /// Reals first, then upper-half points.
    pub fn points(&self) -> Vec<SpectralPoint> {
        self.xs
            .iter()
            .map(|&x| SpectralPoint::Real(x))
            .chain(self.zs.iter().map(|&z| SpectralPoint::UpperHalf(z)))
            .collect()
    }
}

/// Which matrix kernel a correlation function is built from.
#[derive(Debug, Clone)]
pub enum KernelModel {
    /// K̃_{2M} of the real Ginibre ensemble.
    FiniteGinibre { m: u32 },
    /// The M → ∞ limit of K̃_{2M}.
    Limit,
    /// θ-conjugated K̃_{2M} around u√(2M); configuration points are offsets,
    /// with `xs` read as real offsets and `zs` as complex offsets.
    Bulk(BulkScaling),
    /// K_N of an arbitrary weight from its skew Gram matrix.
    Generic(Arc<SkewGram>),
    /// β = 1 or 4 Hermitian kernel; real points only.
    Hermitian(Arc<HermitianKernel>),
}

impl KernelModel {
    /// Number of eigenvalues N when the model is finite.
    pub fn size(&self) -> Option<usize> {
        match self {
            KernelModel::FiniteGinibre { m } => Some(2 * *m as usize),
            KernelModel::Bulk(b) => Some(2 * b.m() as usize),
            KernelModel::Generic(g) => Some(g.n()),
            KernelModel::Hermitian(h) => Some(h.n()),
            KernelModel::Limit => None,
        }
    }

    /// Short description for report metadata.
    pub fn label(&self) -> String {
        match self {
            KernelModel::FiniteGinibre { m } => format!("finite M={m}"),
            KernelModel::Limit => "limit".into(),
            KernelModel::Bulk(b) => format!("bulk u={} M={}", b.u(), b.m()),
            KernelModel::Generic(g) => format!("generic {:?} N={}", g.weight(), g.n()),
            KernelModel::Hermitian(h) => {
                format!("hermitian beta={} {:?} N={}", h.model().beta.value(), h.model().weight, h.n())
            }
        }
    }

    /// Assembles the block kernel matrix for a configuration.
    pub fn kernel_matrix(&self, cfg: &Configuration) -> Result<BlockKernelMatrix> {
        if let KernelModel::FiniteGinibre { m: 0 } = self {
            return Err(Error::Invalid("truncation index must be at least 1".into()));
        }
        if let Some(n) = self.size() {
            let need = match self {
                KernelModel::Hermitian(_) => cfg.ell(),
                _ => cfg.ell() + 2 * cfg.m(),
            };
            if need > n {
                return Err(Error::Invalid(format!(
                    "configuration needs {need} eigenvalues but the model has N = {n}"
                )));
            }
        }
        let t = cfg.ell() + cfg.m();
        let block_fn: Box<dyn Fn(usize, usize) -> Result<KernelBlock> + Sync> = match self {
            KernelModel::FiniteGinibre { m } => {
                let pts = cfg.points();
                let m = *m;
                Box::new(move |i, j| Ok(kernel_tilde(m, pts[i], pts[j])))
            }
            KernelModel::Limit => {
                let pts = cfg.points();
                Box::new(move |i, j| Ok(kernel_limit(pts[i], pts[j])))
            }
            KernelModel::Bulk(b) => {
                let offs: Vec<Offset> = cfg
                    .xs
                    .iter()
                    .map(|&x| Offset::Real(x))
                    .chain(cfg.zs.iter().map(|&z| Offset::Complex(z)))
                    .collect();
                for &o in &offs {
                    b.point(o)?;
                }
                let b = *b;
                Box::new(move |i, j| Ok(bulk_scaled_block(&b, offs[i], offs[j])?.conjugated))
            }
            KernelModel::Generic(g) => {
                let data: Vec<PointData> = cfg
                    .points()
                    .into_iter()
                    .map(|p| g.point_data(p))
                    .collect::<Result<_>>()?;
                let g = g.clone();
                Box::new(move |i, j| Ok(g.block(&data[i], &data[j])))
            }
            KernelModel::Hermitian(h) => {
                if cfg.m() > 0 {
                    return Err(Error::Invalid(
                        "Hermitian ensembles have real eigenvalues only".into(),
                    ));
                }
                let data = h.point_data(&cfg.xs)?;
                let h = h.clone();
                Box::new(move |i, j| Ok(h.block(&data[i], &data[j])))
            }
        };
        let mut blocks = vec![KernelBlock::zero(); t * t];
        for i in 0..t {
            for j in i..t {
                let b = block_fn(i, j)?;
                if i == j {
                    // A self block is antisymmetric exactly; sum-built kernels
                    // leave roundoff in DS and IS that can dwarf a tail S.
                    let s = (b.s + b.s_rev) * 0.5;
                    let z = C64::new(0.0, 0.0);
                    blocks[i * t + i] = KernelBlock { ds: z, s, s_rev: s, is_plus_e: z };
                } else {
                    blocks[i * t + j] = b;
                    blocks[j * t + i] = b.reversed();
                }
            }
        }
        BlockKernelMatrix::new(cfg.points(), blocks)
    }
}

/// Pfaffian of a correlation matrix with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrReport {
    pub value: f64,
    pub imag: f64,
    /// Smallest elimination pivot relative to the matrix max-norm.
    pub min_pivot_ratio: f64,
}

/// Checks realness and sign of a Pfaffian value and clamps roundoff.
pub fn real_nonneg(v: C64) -> Result<f64> {
    if v.im.abs() > 1e-8 * v.re.abs().max(1.0) {
        return Err(Error::NotReal { re: v.re, im: v.im });
    }
    if v.re < -1e-10 {
        return Err(Error::Negative(v.re));
    }
    Ok(v.re.max(0.0))
}

pub fn corr_fn_report(kernel: &KernelModel, cfg: &Configuration) -> Result<CorrReport> {
    if cfg.ell() + cfg.m() == 0 {
        return Ok(CorrReport { value: 1.0, imag: 0.0, min_pivot_ratio: 1.0 });
    }
    let mat = kernel.kernel_matrix(cfg)?.assemble()?;
    let rep = pfaffian_report(&mat);
    let value = real_nonneg(rep.value)?;
    Ok(CorrReport {
        value,
        imag: rep.value.im,
        min_pivot_ratio: rep.min_pivot_ratio,
    })
}

/// R_{ℓ,m} at a configuration; R_{0,0} = 1.
pub fn corr_fn(kernel: &KernelModel, cfg: &Configuration) -> Result<f64> {
    Ok(corr_fn_report(kernel, cfg)?.value)
}

/// ∫_ℝ R_{1,0}, the expected number of real eigenvalues.
pub fn integrate_r10(kernel: &KernelModel) -> Result<f64> {
    let failure = std::sync::Mutex::new(None);
    let r = integrate_breaks(
        |x| match corr_fn(kernel, &Configuration { xs: vec![x], zs: vec![] }) {
            Ok(v) => v,
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
                0.0
            }
        },
        &[f64::NEG_INFINITY, 0.0, f64::INFINITY],
        &QuadOptions::with_tol(1e-13, 1e-11),
    );
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    r.into_result()
}

/// ∫_H R_{0,1}, the expected number of conjugate pairs.
pub fn integrate_r01(kernel: &KernelModel) -> Result<f64> {
    let failure = std::sync::Mutex::new(None);
    let r = integrate_upper_half(
        |x, y| match corr_fn(kernel, &Configuration { xs: vec![], zs: vec![C64::new(x, y)] }) {
            Ok(v) => v,
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
                0.0
            }
        },
        &[f64::NEG_INFINITY, 0.0, f64::INFINITY],
        |_| vec![],
        &QuadOptions::with_tol(1e-12, 1e-9),
    );
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    r.into_result()
}

// ---------------------------------------------------------------------------
// Brute force from the joint density

/// Where the normalizing constant of a brute-force correlation comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionSource {
    /// Quadrature over every (L, M) sector.
    Direct,
    /// Pf U by `partition_fn`.
    Pfaffian,
    Given(f64),
}

/// Ω_{L,M}: 2^M ∏ρ(α) ∏ρ(β)ρ(β̄) |Δ(α, β, β̄)|.
pub fn omega(w: &WeightSpec, reals: &[f64], uppers: &[C64]) -> f64 {
    let mut pts: Vec<C64> = reals.iter().map(|&x| C64::new(x, 0.0)).collect();
    for &z in uppers {
        pts.push(z);
        pts.push(z.conj());
    }
    let mut v = 2f64.powi(uppers.len() as i32);
    for &x in reals {
        v *= w.real(x);
    }
    for &z in uppers {
        v *= w.pair(z);
    }
    if v == 0.0 {
        return 0.0;
    }
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            v *= (pts[i] - pts[j]).norm();
        }
    }
    v
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// ∫ over `free_reals` real and `free_uppers` upper-half variables of
/// Ω(fixed ∨ free), by nested adaptive quadrature.
fn integrate_free(
    w: &WeightSpec,
    reals: &[f64],
    uppers: &[C64],
    free_reals: usize,
    free_uppers: usize,
    opts: &QuadOptions,
) -> Result<f64> {
    if free_reals == 0 && free_uppers == 0 {
        return Ok(omega(w, reals, uppers));
    }
    let failure = std::sync::Mutex::new(None);
    let record = |r: Result<f64>| match r {
        Ok(v) => v,
        Err(e) => {
            failure.lock().unwrap().get_or_insert(e);
            0.0
        }
    };
    let inner = QuadOptions {
        abs_tol: opts.abs_tol * 1e-2,
        rel_tol: opts.rel_tol * 1e-1,
        ..*opts
    };
    let r = if free_reals > 0 {
        let breaks = w.real_breaks(reals);
        integrate_breaks(
            |a| {
                let mut rs = reals.to_vec();
                rs.push(a);
                record(integrate_free(w, &rs, uppers, free_reals - 1, free_uppers, &inner))
            },
            &breaks,
            opts,
        )
    } else {
        let mut xb = w.x_breaks();
        xb.extend(reals.iter().copied());
        xb.extend(uppers.iter().map(|z| z.re));
        integrate_upper_half(
            |x, y| {
                let mut us = uppers.to_vec();
                us.push(C64::new(x, y));
                record(integrate_free(w, reals, &us, 0, free_uppers - 1, &inner))
            },
            &xb,
            |x| {
                let mut b = w.y_breaks(x);
                b.extend(uppers.iter().filter(|z| (z.re - x).abs() < 1e-300).map(|z| z.im));
                b
            },
            opts,
        )
    };
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    r.into_result()
}

/// Z as Σ_{L+2M=N} 1/(L! M!) ∫ Ω_{L,M} over ℝ^L × H^M. Feasible for N ≤ 4.
pub fn partition_direct(w: &WeightSpec, n: usize) -> Result<f64> {
    if n == 0 || n % 2 == 1 || n > 4 {
        return Err(Error::Invalid(format!(
            "direct partition function needs even N ≤ 4, got {n}"
        )));
    }
    w.validate(n)?;
    let opts = QuadOptions::with_tol(1e-14, 1e-10);
    let mut z = 0.0;
    for big_m in 0..=n / 2 {
        let big_l = n - 2 * big_m;
        z += integrate_free(w, &[], &[], big_l, big_m, &opts)?
            / (factorial(big_l) * factorial(big_m));
    }
    Ok(z)
}

/// R_{ℓ,m} from the joint density: for each (L, M) with L + 2M = N, L ≥ ℓ and
/// M ≥ m, integrate Ω_{L,M} over the remaining variables with weight
/// 1/((L−ℓ)!(M−m)!), sum, and divide by Z.
pub fn brute_corr(w: &WeightSpec, n: usize, cfg: &Configuration, z: PartitionSource) -> Result<f64> {
    if n == 0 || n % 2 == 1 || n > 4 {
        return Err(Error::Invalid(format!("brute force needs even N ≤ 4, got {n}")));
    }
    w.validate(n)?;
    let (ell, m) = (cfg.ell(), cfg.m());
    if ell + 2 * m > n {
        return Err(Error::Invalid(format!(
            "configuration needs {} eigenvalues but N = {n}",
            ell + 2 * m
        )));
    }
    if ell + m == 0 {
        return Ok(1.0);
    }
    let zval = match z {
        PartitionSource::Direct => partition_direct(w, n)?,
        PartitionSource::Pfaffian => partition_fn(w, n)?,
        PartitionSource::Given(v) => v,
    };
    let opts = QuadOptions::with_tol(1e-14, 1e-10);
    let mut total = 0.0;
    for big_m in m..=n / 2 {
        let big_l = n - 2 * big_m;
        if big_l < ell {
            continue;
        }
        let (fr, fu) = (big_l - ell, big_m - m);
        total += integrate_free(w, &cfg.xs, &cfg.zs, fr, fu, &opts)? / (factorial(fr) * factorial(fu));
    }
    Ok(total / zval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn poly_basics() {
        let p = Poly::new(vec![1.0, -2.0, 0.0, 1.0, 0.0]);
        assert_eq!(p.degree(), 3);
        assert!(p.is_monic());
        assert_eq!(p.eval(2.0), 5.0);
        assert_eq!(p.derivative().coeffs(), &[-2.0, 0.0, 3.0]);
        assert_eq!(p.eval_c(C64::new(0.0, 1.0)), C64::new(1.0, -3.0));
    }

    #[test]
    fn custom_basis_must_be_monic() {
        let b = Basis::Custom(vec![Poly::new(vec![1.0]), Poly::new(vec![0.0, 2.0])]);
        assert!(b.polys(2).is_err());
        assert!(Basis::Custom(vec![Poly::new(vec![1.0])]).polys(2).is_err());
    }

    #[test]
    fn self_pairing_vanishes() {
        let g = Poly::new(vec![0.5, -1.0, 1.0]);
        let v = skew_product(&WeightSpec::Ginibre, &g, &g).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn ginibre_first_pair() {
        let v = skew_product(&WeightSpec::Ginibre, &Poly::monomial(0), &Poly::monomial(1)).unwrap();
        assert!((v - 2.0 * (2.0 * PI).sqrt()).abs() < 1e-11);
    }

    #[test]
    fn mahler_validation() {
        assert!(build_gram(&WeightSpec::Mahler { s: 2.0 }, 2, &Basis::Monomial).is_err());
        assert!(build_gram(&WeightSpec::Ginibre, 3, &Basis::Monomial).is_err());
    }

    #[test]
    fn omega_counts_pairs() {
        // N = 2, one pair at z = x + iy: 2·w(z)·2y.
        let z = C64::new(0.3, 0.7);
        let v = omega(&WeightSpec::Ginibre, &[], &[z]);
        assert!((v - 4.0 * 0.7 * gin_weight(z)).abs() < 1e-15);
    }

    #[test]
    fn configuration_validation() {
        assert!(Configuration::new(vec![0.0], vec![C64::new(1.0, 0.0)]).is_err());
        let cfg = Configuration::new(vec![0.1], vec![C64::new(0.0, 1.0)]).unwrap();
        assert_eq!(cfg.points().len(), 2);
        let k = KernelModel::FiniteGinibre { m: 1 };
        assert!(corr_fn(&k, &cfg).unwrap_err().is_validation());
    }

    #[test]
    fn real_nonneg_contract() {
        assert_eq!(real_nonneg(C64::new(-1e-12, 0.0)).unwrap(), 0.0);
        assert!(real_nonneg(C64::new(-1e-6, 0.0)).is_err());
        assert!(real_nonneg(C64::new(1.0, 1e-3)).is_err());
    }
}
