//! Monte Carlo oracle for the real Ginibre ensemble.
//!
//! Matrices are filled with standard normals from ChaCha8 (seeded through
//! `SeedableRng::seed_from_u64`) using the Marsaglia polar method, reduced to
//! Hessenberg form by Householder reflections and brought to real Schur form
//! by Francis double-shift QR. Eigenvalues are classified by Schur block: a
//! deflated 1×1 block or a 2×2 block with real eigenvalues gives reals, a 2×2
//! block with a complex pair gives one upper-half representative. No |Im λ|
//! threshold is ever applied.
//!
//! Sample i of a run with seed s is `sample_ginoe(n, s + i·(2^61 − 1))`, so
//! results do not depend on how samples are split across threads. Histogram
//! counts are integers and merge exactly.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlations::{corr_fn, integrate_r10, Configuration, KernelModel};
use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_breaks, InnerStatus, QuadOptions};
use crate::specfun::{regularized_upper_gamma, GammaOrder};

type C64 = Complex64;

pub const MAX_N: usize = 64;
/// 2^61 − 1, the stride between per-sample seeds.
pub const SEED_STRIDE: u64 = (1 << 61) - 1;
/// Bins with fewer expected counts than this are left out of χ² and of the
/// maximum standardized deviation.
pub const MIN_EXPECTED: f64 = 5.0;

const CHUNK: usize = 512;

pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index.wrapping_mul(SEED_STRIDE))
}

/// Standard normal variates by the Marsaglia polar method.
pub struct NormalStream<R: Rng> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> NormalStream<R> {
    pub fn new(rng: R) -> Self {
        NormalStream { rng, spare: None }
    }

    pub fn next(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        loop {
            let u = 2.0 * self.rng.gen::<f64>() - 1.0;
            let v = 2.0 * self.rng.gen::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 || n % 2 == 1 || n > MAX_N {
        return Err(Error::Invalid(format!(
            "matrix size must be even and in 2..={MAX_N}, got {n}"
        )));
    }
    Ok(())
}

/// The n×n GinOE matrix for a seed, filled row by row.
pub fn ginoe_matrix(n: usize, seed: u64) -> Result<DMatrix<f64>> {
    check_size(n)?;
    let mut g = NormalStream::new(ChaCha8Rng::seed_from_u64(seed));
    Ok(DMatrix::from_row_iterator(n, n, (0..n * n).map(|_| g.next())))
}

/// Real eigenvalues and upper-half representatives of complex pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchurSpectrum {
    pub reals: Vec<f64>,
    pub pairs: Vec<C64>,
}

/// Householder reduction to upper Hessenberg form, in place.
fn hessenberg(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let mut v: Vec<f64> = (0..len).map(|i| a[(k + 1 + i, k)]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = -norm.copysign(v[0]);
        v[0] -= alpha;
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vn == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vn);
        for j in k..n {
            let d: f64 = (0..len).map(|i| v[i] * a[(k + 1 + i, j)]).sum();
            for i in 0..len {
                a[(k + 1 + i, j)] -= 2.0 * d * v[i];
            }
        }
        for i in 0..n {
            let d: f64 = (0..len).map(|j| a[(i, k + 1 + j)] * v[j]).sum();
            for j in 0..len {
                a[(i, k + 1 + j)] -= 2.0 * d * v[j];
            }
        }
        a[(k + 1, k)] = alpha;
        for i in k + 2..n {
            a[(i, k)] = 0.0;
        }
    }
}

enum ShiftPolicy {
    /// Ad hoc shift with the classical 0.75 factor.
    Standard,
    /// Ad hoc shift factor drawn uniformly from [0.5, 1).
    Randomized(ChaCha8Rng),
}

/// Francis double-shift QR on an upper Hessenberg matrix. Eigenvalues only:
/// each sweep touches just the active window. At most 40·n sweeps, with an
/// ad hoc shift after every 10 sweeps without deflation.
fn francis(mut h: DMatrix<f64>, policy: &mut ShiftPolicy) -> Option<SchurSpectrum> {
    let n = h.nrows();
    let eps = f64::EPSILON;
    // 1-based indexing keeps the loop bounds readable.
    macro_rules! a {
        ($i:expr, $j:expr) => {
            h[($i - 1, $j - 1)]
        };
    }
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.max(2) - 1..=n {
            anorm += f64::abs(a!(i, j));
        }
    }
    let mut out = SchurSpectrum { reals: Vec::new(), pairs: Vec::new() };
    let cap = 40 * n;
    let mut sweeps = 0;
    let mut t = 0.0;
    let mut nn = n;
    let (mut p, mut q, mut r, mut s, mut w, mut x, mut y, mut z);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                s = f64::abs(a!(l - 1, l - 1)) + f64::abs(a!(l, l));
                if s == 0.0 {
                    s = anorm;
                }
                if f64::abs(a!(l, l - 1)) <= eps * s {
                    a!(l, l - 1) = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a!(nn, nn);
            if l == nn {
                out.reals.push(x + t);
                nn -= 1;
                break;
            }
            y = a!(nn - 1, nn - 1);
            w = a!(nn, nn - 1) * a!(nn - 1, nn);
            if l == nn - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    out.reals.push(x + z);
                    out.reals.push(if z != 0.0 { x - w / z } else { x + z });
                } else {
                    out.pairs.push(C64::new(x + p, z));
                }
                nn -= 2;
                break;
            }
            if sweeps == cap {
                return None;
            }
            if its > 0 && its % 10 == 0 {
                let c = match policy {
                    ShiftPolicy::Standard => 0.75,
                    ShiftPolicy::Randomized(rng) => rng.gen_range(0.5..1.0),
                };
                t += x;
                for i in 1..=nn {
                    a!(i, i) -= x;
                }
                s = f64::abs(a!(nn, nn - 1)) + f64::abs(a!(nn - 1, nn - 2));
                x = c * s;
                y = x;
                w = -(1.0 - c * c) * s * s;
            }
            its += 1;
            sweeps += 1;
            let mut m = nn - 2;
            loop {
                z = a!(m, m);
                r = x - z;
                s = y - z;
                p = (r * s - w) / a!(m + 1, m) + a!(m, m + 1);
                q = a!(m + 1, m + 1) - z - r - s;
                r = a!(m + 2, m + 1);
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = f64::abs(a!(m, m - 1)) * (q.abs() + r.abs());
                let v = p.abs() * (f64::abs(a!(m - 1, m - 1)) + z.abs() + f64::abs(a!(m + 1, m + 1)));
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nn {
                a!(i, i - 2) = 0.0;
                if i != m + 2 {
                    a!(i, i - 3) = 0.0;
                }
            }
            for k in m..nn {
                if k != m {
                    p = a!(k, k - 1);
                    q = a!(k + 1, k - 1);
                    r = if k != nn - 1 { a!(k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l != m {
                        a!(k, k - 1) = -a!(k, k - 1);
                    }
                } else {
                    a!(k, k - 1) = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;
                for j in k..=nn {
                    p = a!(k, j) + q * a!(k + 1, j);
                    if k != nn - 1 {
                        p += r * a!(k + 2, j);
                        a!(k + 2, j) -= p * z;
                    }
                    a!(k + 1, j) -= p * y;
                    a!(k, j) -= p * x;
                }
                for i in l..=nn.min(k + 3) {
                    p = x * a!(i, k) + y * a!(i, k + 1);
                    if k != nn - 1 {
                        p += z * a!(i, k + 2);
                        a!(i, k + 2) -= p * r;
                    }
                    a!(i, k + 1) -= p * q;
                    a!(i, k) -= p;
                }
            }
        }
    }
    Some(out)
}

/// Eigenvalues of a real square matrix through its real Schur form. A QR
/// failure is retried once with randomized ad hoc shifts before it is
/// reported. Reals come back ascending, pairs ordered by real part.
pub fn real_schur_spectrum(a: &DMatrix<f64>) -> Result<SchurSpectrum> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!("{}x{} matrix is not square", n, a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("matrix has non-finite entries".into()));
    }
    let mut h = a.clone();
    hessenberg(&mut h);
    let mut spec = francis(h.clone(), &mut ShiftPolicy::Standard)
        .or_else(|| {
            let rng = ChaCha8Rng::seed_from_u64(0x5ca1_ab1e ^ n as u64);
            francis(h, &mut ShiftPolicy::Randomized(rng))
        })
        .ok_or(Error::NoConvergence(n))?;
    spec.reals.sort_by(f64::total_cmp);
    spec.pairs.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(spec)
}

/// One GinOE draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSample {
    pub n: usize,
    pub reals: Vec<f64>,
    pub pairs: Vec<C64>,
    /// |Σλ − tr Y|.
    pub trace_check: f64,
}

impl EigenSample {
    /// The tolerance `trace_check` is held to: 1e−8·n·max|Y_ij|.
    pub fn trace_tolerance(y: &DMatrix<f64>) -> f64 {
        1e-8 * y.nrows() as f64 * y.amax()
    }
}

fn sample_from(y: &DMatrix<f64>) -> Result<EigenSample> {
    let n = y.nrows();
    let spec = real_schur_spectrum(y)?;
    let sum: f64 = spec.reals.iter().sum::<f64>() + 2.0 * spec.pairs.iter().map(|z| z.re).sum::<f64>();
    Ok(EigenSample {
        n,
        trace_check: (sum - y.trace()).abs(),
        reals: spec.reals,
        pairs: spec.pairs,
    })
}

pub fn sample_ginoe(n: usize, seed: u64) -> Result<EigenSample> {
    sample_from(&ginoe_matrix(n, seed)?)
}

/// Samples `derive_seed(seed, i)` for i < count, in index order.
pub fn sample_many(n: usize, count: usize, seed: u64) -> Result<Vec<EigenSample>> {
    check_size(n)?;
    (0..count as u64)
        .into_par_iter()
        .map(|i| sample_ginoe(n, derive_seed(seed, i)))
        .collect()
}

/// Uniform bins on [lo, hi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || bins == 0 {
            return Err(Error::Invalid(format!(
                "empty binning support [{lo}, {hi}) with {bins} bins"
            )));
        }
        Ok(Axis { lo, hi, bins })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins).map(|k| self.edge(k)).collect()
    }

    /// Computed from the endpoints so the last edge is exactly `hi`.
    pub fn edge(&self, k: usize) -> f64 {
        let f = k as f64 / self.bins as f64;
        self.lo * (1.0 - f) + self.hi * f
    }

    pub fn index(&self, v: f64) -> Option<usize> {
        if !(v >= self.lo && v < self.hi) {
            return None;
        }
        Some((((v - self.lo) / self.width()) as usize).min(self.bins - 1))
    }
}

/// Histogram layout. With `rescale` eigenvalues are divided by √n before
/// binning, and densities are per unit of rescaled measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub real: Axis,
    pub complex_re: Axis,
    pub complex_im: Axis,
    pub rescale: bool,
}

impl Binning {
    /// Covers radius √n + 3 unscaled, 1.5 rescaled.
    pub fn default_for(n: usize, rescale: bool) -> Self {
        let r = if rescale { 1.5 } else { (n as f64).sqrt() + 3.0 };
        Binning {
            real: Axis { lo: -r, hi: r, bins: 40 },
            complex_re: Axis { lo: -r, hi: r, bins: 20 },
            complex_im: Axis { lo: 0.0, hi: r, bins: 10 },
            rescale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for a in [self.real, self.complex_re, self.complex_im] {
            Axis::new(a.lo, a.hi, a.bins)?;
        }
        if self.complex_im.lo < 0.0 {
            return Err(Error::Invalid(format!(
                "complex bins must lie in the closed upper half plane, got Im from {}",
                self.complex_im.lo
            )));
        }
        Ok(())
    }

    fn scale(&self, n: usize) -> f64 {
        if self.rescale {
            (n as f64).sqrt()
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram1 {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// counts / (samples · bin width).
    pub density: Vec<f64>,
    pub outside: u64,
}

/// Cells indexed `[re][im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2 {
    pub re_edges: Vec<f64>,
    pub im_edges: Vec<f64>,
    pub counts: Vec<Vec<u64>>,
    pub density: Vec<Vec<f64>>,
    pub outside: u64,
}

/// Empirical R_{1,0} and R_{0,1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub n: usize,
    /// Requested draws; failed draws are excluded from every normalization.
    pub n_samples: usize,
    pub seed: u64,
    pub binning: Binning,
    pub real_hist: Histogram1,
    pub complex_hist: Histogram2,
    /// Entry k counts samples with exactly k real eigenvalues. Empty for
    /// synthetic estimates, which have no per-sample structure.
    pub real_count_hist: Vec<u64>,
    pub qr_failures: u64,
}

impl DensityEstimate {
    pub fn successful(&self) -> u64 {
        self.n_samples as u64 - self.qr_failures
    }

    pub fn qr_failure_rate(&self) -> f64 {
        self.qr_failures as f64 / self.n_samples as f64
    }

    /// Σ density · measure = mean number of reals inside the bins.
    pub fn total_real_mass(&self) -> f64 {
        self.real_hist.counts.iter().sum::<u64>() as f64 / self.successful() as f64
    }

    pub fn total_complex_mass(&self) -> f64 {
        self.complex_hist.counts.iter().flatten().sum::<u64>() as f64 / self.successful() as f64
    }

    pub fn real_count_mean(&self) -> Option<f64> {
        if self.real_count_hist.is_empty() {
            return None;
        }
        let n = self.successful() as f64;
        Some(self.real_count_hist.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum::<f64>() / n)
    }

    /// Unbiased sample variance of the real count.
    pub fn real_count_var(&self) -> Option<f64> {
        let mean = self.real_count_mean()?;
        let n = self.successful() as f64;
        let ss: f64 = self
            .real_count_hist
            .iter()
            .enumerate()
            .map(|(k, &c)| c as f64 * (k as f64 - mean).powi(2))
            .sum();
        Some(ss / (n - 1.0))
    }

    pub fn real_count_se(&self) -> Option<f64> {
        Some((self.real_count_var()? / self.successful() as f64).sqrt())
    }
}

#[derive(Clone)]
struct Tally {
    real: Vec<u64>,
    real_out: u64,
    cplx: Vec<u64>,
    cplx_out: u64,
    count_hist: Vec<u64>,
    failures: u64,
}

impl Tally {
    fn new(n: usize, b: &Binning) -> Self {
        Tally {
            real: vec![0; b.real.bins],
            real_out: 0,
            cplx: vec![0; b.complex_re.bins * b.complex_im.bins],
            cplx_out: 0,
            count_hist: vec![0; n + 1],
            failures: 0,
        }
    }

    fn add(&mut self, s: &EigenSample, b: &Binning) {
        let sc = b.scale(s.n);
        for &x in &s.reals {
            match b.real.index(x / sc) {
                Some(k) => self.real[k] += 1,
                None => self.real_out += 1,
            }
        }
        for &z in &s.pairs {
            match (b.complex_re.index(z.re / sc), b.complex_im.index(z.im / sc)) {
                (Some(i), Some(j)) => self.cplx[i * b.complex_im.bins + j] += 1,
                _ => self.cplx_out += 1,
            }
        }
        self.count_hist[s.reals.len()] += 1;
    }

    fn merge(mut self, o: Tally) -> Tally {
        let add = |a: &mut Vec<u64>, b: &[u64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.real, &o.real);
        add(&mut self.cplx, &o.cplx);
        add(&mut self.count_hist, &o.count_hist);
        self.real_out += o.real_out;
        self.cplx_out += o.cplx_out;
        self.failures += o.failures;
        self
    }
}

fn finish(
    n: usize,
    n_samples: usize,
    seed: u64,
    binning: Binning,
    t: Tally,
) -> Result<DensityEstimate> {
    let ok = n_samples as u64 - t.failures;
    if ok == 0 {
        return Err(Error::NoConvergence(n));
    }
    let ok = ok as f64;
    let rw = binning.real.width();
    let cw = binning.complex_re.width() * binning.complex_im.width();
    let nim = binning.complex_im.bins;
    let counts: Vec<Vec<u64>> = t.cplx.chunks(nim).map(|c| c.to_vec()).collect();
    let density = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / (ok * cw)).collect())
        .collect();
    Ok(DensityEstimate {
        n,
        n_samples,
        seed,
        binning,
        real_hist: Histogram1 {
            edges: binning.real.edges(),
            density: t.real.iter().map(|&c| c as f64 / (ok * rw)).collect(),
            counts: t.real,
            outside: t.real_out,
        },
        complex_hist: Histogram2 {
            re_edges: binning.complex_re.edges(),
            im_edges: binning.complex_im.edges(),
            counts,
            density,
            outside: t.cplx_out,
        },
        real_count_hist: t.count_hist,
        qr_failures: t.failures,
    })
}

/// Histograms of `n_samples` GinOE draws. QR failures are counted and the
/// failed draws skipped; callers decide what failure rate is acceptable.
pub fn estimate_density(n: usize, n_samples: usize, seed: u64, binning: Binning) -> Result<DensityEstimate> {
    check_size(n)?;
    binning.validate()?;
    if n_samples < 2 {
        return Err(Error::Invalid("at least two samples are needed".into()));
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let tally = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut t = Tally::new(n, &binning);
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                match sample_ginoe(n, derive_seed(seed, i as u64)) {
                    Ok(s) => t.add(&s, &binning),
                    Err(Error::NoConvergence(_)) => t.failures += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok(t)
        })
        .try_reduce(|| Tally::new(n, &binning), |a, b| Ok(a.merge(b)))?;
    finish(n, n_samples, seed, binning, tally)
}

/// Expected counts per sample in every bin under a kernel model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPrediction {
    pub real: Vec<f64>,
    /// Indexed `[re][im]`.
    pub complex: Vec<Vec<f64>>,
}

fn check_model(n: usize, kernel: &KernelModel) -> Result<()> {
    match kernel {
        KernelModel::FiniteGinibre { .. } | KernelModel::Generic(_) => {}
        _ => {
            return Err(Error::DimensionMismatch(format!(
                "sample comparison needs a finite real-Ginibre-type model, got {}",
                kernel.label()
            )))
        }
    }
    match kernel.size() {
        Some(k) if k == n => Ok(()),
        k => Err(Error::DimensionMismatch(format!(
            "estimate is for n = {n} but the kernel has N = {}",
            k.unwrap_or(0)
        ))),
    }
}

fn failing<T>(slot: &std::sync::Mutex<Option<Error>>, r: Result<T>, fallback: T) -> T {
    r.unwrap_or_else(|e| {
        slot.lock().unwrap().get_or_insert(e);
        fallback
    })
}

/// ∫ over each bin of R_{1,0} and R_{0,1} by adaptive quadrature.
pub fn predict_bins(n: usize, binning: &Binning, kernel: &KernelModel) -> Result<BinPrediction> {
    check_model(n, kernel)?;
    binning.validate()?;
    let sc = binning.scale(n);
    let opts = QuadOptions::with_tol(1e-13, 1e-9);
    let real = (0..binning.real.bins)
        .into_par_iter()
        .map(|k| {
            let slot = std::sync::Mutex::new(None);
            let r = integrate(
                |x| failing(&slot, corr_fn(kernel, &Configuration { xs: vec![x], zs: vec![] }), 0.0),
                binning.real.edge(k) * sc,
                binning.real.edge(k + 1) * sc,
                &opts,
            );
            match slot.into_inner().unwrap() {
                Some(e) => Err(e),
                None => r.into_result(),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let (re, im) = (binning.complex_re, binning.complex_im);
    let cells = (0..re.bins * im.bins)
        .into_par_iter()
        .map(|c| {
            let (i, j) = (c / im.bins, c % im.bins);
            let slot = std::sync::Mutex::new(None);
            let status = InnerStatus::default();
            let inner = QuadOptions::with_tol(opts.abs_tol * 1e-2, opts.rel_tol * 1e-1);
            let outer = integrate(
                |x| {
                    let r = integrate(
                        |y| {
                            let cfg = Configuration { xs: vec![], zs: vec![C64::new(x, y)] };
                            failing(&slot, corr_fn(kernel, &cfg), 0.0)
                        },
                        im.edge(j) * sc,
                        im.edge(j + 1) * sc,
                        &inner,
                    );
                    status.record(&r)
                },
                re.edge(i) * sc,
                re.edge(i + 1) * sc,
                &opts,
            );
            match slot.into_inner().unwrap() {
                Some(e) => Err(e),
                None => status.finish(outer).into_result(),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(BinPrediction {
        real,
        complex: cells.chunks(im.bins).map(|c| c.to_vec()).collect(),
    })
}

/// A synthetic estimate whose bin counts are Poisson with the predicted
/// rates, for checking the comparison machinery against itself.
pub fn synthetic_estimate(
    kernel: &KernelModel,
    n: usize,
    n_samples: usize,
    seed: u64,
    binning: Binning,
) -> Result<DensityEstimate> {
    check_size(n)?;
    let pred = predict_bins(n, &binning, kernel)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rate: f64| -> u64 {
        let lam = rate * n_samples as f64;
        if lam > 0.0 {
            Poisson::new(lam).map(|d| d.sample(&mut rng) as u64).unwrap_or(0)
        } else {
            0
        }
    };
    let real: Vec<u64> = pred.real.iter().map(|&r| draw(r)).collect();
    let cplx: Vec<u64> = pred.complex.iter().flatten().map(|&r| draw(r)).collect();
    let tally = Tally {
        real,
        real_out: 0,
        cplx,
        cplx_out: 0,
        count_hist: vec![],
        failures: 0,
    };
    finish(n, n_samples, seed, binning, tally)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquare {
    /// Upper tail Q(k/2, χ²/2) over bins with at least `MIN_EXPECTED`
    /// expected counts.
    pub fn from_bins<'a>(bins: impl Iterator<Item = &'a BinComparison>) -> Result<Self> {
        let mut statistic = 0.0;
        let mut dof = 0;
        for b in bins.filter(|b| b.expected >= MIN_EXPECTED) {
            statistic += (b.observed as f64 - b.expected).powi(2) / b.expected;
            dof += 1;
        }
        let p_value = if dof == 0 {
            1.0
        } else {
            regularized_upper_gamma(GammaOrder::from_half_units(dof as u32)?, statistic / 2.0)?
        };
        Ok(ChiSquare { statistic, dof, p_value })
    }
}

/// Observed vs expected counts in one bin; `lo`/`hi` hold the real part
/// range and `im_lo`/`im_hi` the imaginary range of complex cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinComparison {
    pub lo: f64,
    pub hi: f64,
    pub im_lo: Option<f64>,
    pub im_hi: Option<f64>,
    pub observed: u64,
    pub expected: f64,
    /// (observed − expected)/√expected; absent below `MIN_EXPECTED`.
    pub std_dev: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountComparison {
    pub observed_mean: f64,
    pub standard_error: f64,
    pub predicted_mean: f64,
    /// (observed − predicted)/standard error.
    pub z: f64,
    pub observed_var: f64,
    /// From ∫∫R_{2,0}; computed for the closed-form Ginibre kernel only.
    pub predicted_var: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub kernel_model: String,
    pub real_bins: Vec<BinComparison>,
    pub complex_bins: Vec<BinComparison>,
    pub chi2_real: ChiSquare,
    pub chi2_complex: ChiSquare,
    pub chi2: ChiSquare,
    pub max_std_dev: f64,
    pub real_count: Option<CountComparison>,
}

/// E[#real(#real − 1)] = ∫∫R_{2,0}.
fn integrate_r20(kernel: &KernelModel) -> Result<f64> {
    let slot = std::sync::Mutex::new(None);
    let status = InnerStatus::default();
    let opts = QuadOptions::with_tol(1e-10, 1e-8);
    let inner = QuadOptions::with_tol(1e-12, 1e-9);
    let line = [f64::NEG_INFINITY, 0.0, f64::INFINITY];
    let outer = integrate_breaks(
        |x| {
            let r = integrate_breaks(
                |y| failing(&slot, corr_fn(kernel, &Configuration { xs: vec![x, y], zs: vec![] }), 0.0),
                &[f64::NEG_INFINITY, x, f64::INFINITY],
                &inner,
            );
            status.record(&r)
        },
        &line,
        &opts,
    );
    match slot.into_inner().unwrap() {
        Some(e) => Err(e),
        None => status.finish(outer).into_result(),
    }
}

pub fn compare(est: &DensityEstimate, kernel: &KernelModel) -> Result<ComparisonReport> {
    let pred = predict_bins(est.n, &est.binning, kernel)?;
    let ok = est.successful() as f64;
    let bin = |lo, hi, im: Option<(f64, f64)>, observed: u64, rate: f64| {
        let expected = rate * ok;
        BinComparison {
            lo,
            hi,
            im_lo: im.map(|p| p.0),
            im_hi: im.map(|p| p.1),
            observed,
            expected,
            std_dev: (expected >= MIN_EXPECTED).then(|| (observed as f64 - expected) / expected.sqrt()),
        }
    };
    let b = &est.binning;
    let real_bins: Vec<BinComparison> = (0..b.real.bins)
        .map(|k| bin(b.real.edge(k), b.real.edge(k + 1), None, est.real_hist.counts[k], pred.real[k]))
        .collect();
    let mut complex_bins = Vec::with_capacity(b.complex_re.bins * b.complex_im.bins);
    for i in 0..b.complex_re.bins {
        for j in 0..b.complex_im.bins {
            complex_bins.push(bin(
                b.complex_re.edge(i),
                b.complex_re.edge(i + 1),
                Some((b.complex_im.edge(j), b.complex_im.edge(j + 1))),
                est.complex_hist.counts[i][j],
                pred.complex[i][j],
            ));
        }
    }
    let chi2_real = ChiSquare::from_bins(real_bins.iter())?;
    let chi2_complex = ChiSquare::from_bins(complex_bins.iter())?;
    let chi2 = ChiSquare::from_bins(real_bins.iter().chain(&complex_bins))?;
    let max_std_dev = real_bins
        .iter()
        .chain(&complex_bins)
        .filter_map(|b| b.std_dev)
        .fold(0.0, |m: f64, d| m.max(d.abs()));
    let real_count = match (est.real_count_mean(), est.real_count_var(), est.real_count_se()) {
        (Some(mean), Some(var), Some(se)) => {
            let predicted_mean = integrate_r10(kernel)?;
            let predicted_var = match kernel {
                KernelModel::FiniteGinibre { .. } => {
                    Some(integrate_r20(kernel)? + predicted_mean - predicted_mean * predicted_mean)
                }
                _ => None,
            };
            Some(CountComparison {
                observed_mean: mean,
                standard_error: se,
                predicted_mean,
                z: (mean - predicted_mean) / se,
                observed_var: var,
                predicted_var,
            })
        }
        _ => None,
    };
    Ok(ComparisonReport {
        n: est.n,
        n_samples: est.n_samples,
        seed: est.seed,
        kernel_model: kernel.label(),
        real_bins,
        complex_bins,
        chi2_real,
        chi2_complex,
        chi2,
        max_std_dev,
        real_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle_eigs(a: &DMatrix<f64>) -> Vec<C64> {
        let mut v: Vec<C64> = nalgebra::Schur::new(a.clone()).complex_eigenvalues().iter().copied().collect();
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    fn all_eigs(s: &SchurSpectrum) -> Vec<C64> {
        let mut v: Vec<C64> = s.reals.iter().map(|&x| C64::new(x, 0.0)).collect();
        for z in &s.pairs {
            v.push(*z);
            v.push(z.conj());
        }
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn polar_normals_have_unit_moments() {
        let mut g = NormalStream::new(ChaCha8Rng::seed_from_u64(7));
        let k = 200_000;
        let xs: Vec<f64> = (0..k).map(|_| g.next()).collect();
        let mean = xs.iter().sum::<f64>() / k as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / k as f64;
        let kurt = xs.iter().map(|x| x.powi(4)).sum::<f64>() / k as f64;
        // 5σ bounds: se(mean) = 1/√k, se(E x²) = √2/√k, se(E x⁴) = √96/√k.
        assert!(mean.abs() < 5.0 / (k as f64).sqrt());
        assert!((var - 1.0).abs() < 5.0 * 2f64.sqrt() / (k as f64).sqrt());
        assert!((kurt - 3.0).abs() < 5.0 * 96f64.sqrt() / (k as f64).sqrt());
    }

    #[test]
    fn known_spectra() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        let s = real_schur_spectrum(&rot).unwrap();
        assert!(s.reals.is_empty());
        assert!((s.pairs[0] - C64::new(0.0, 2.0)).norm() < 1e-15);

        // Companion matrix of (x−1)(x−2)(x−3)(x²+1).
        // Coefficients of x⁵ − 6x⁴ + 12x³ − 12x² + 11x − 6.
        let c = [-6.0, 11.0, -12.0, 12.0, -6.0];
        let mut m = DMatrix::zeros(5, 5);
        for i in 1..5 {
            m[(i, i - 1)] = 1.0;
        }
        for i in 0..5 {
            m[(i, 4)] = -c[i];
        }
        let s = real_schur_spectrum(&m).unwrap();
        assert_eq!(s.reals.len(), 3);
        for (x, want) in s.reals.iter().zip([1.0, 2.0, 3.0]) {
            assert!((x - want).abs() < 1e-12, "{x}");
        }
        assert!((s.pairs[0] - C64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn agrees_with_nalgebra_schur() {
        for seed in 0..200u64 {
            let n = 2 + 2 * (seed as usize % 8);
            let y = ginoe_matrix(n, seed).unwrap();
            let ours = all_eigs(&real_schur_spectrum(&y).unwrap());
            let theirs = oracle_eigs(&y);
            for (a, b) in ours.iter().zip(&theirs) {
                assert!((a - b).norm() < 1e-9 * y.amax() * n as f64, "seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn sample_invariants() {
        for seed in 0..300u64 {
            let n = [2, 4, 6, 10, 16, 64][seed as usize % 6];
            let y = ginoe_matrix(n, seed).unwrap();
            let s = sample_ginoe(n, seed).unwrap();
            assert_eq!(s.reals.len() + 2 * s.pairs.len(), n);
            assert!(s.pairs.iter().all(|z| z.im > 0.0));
            assert!(s.trace_check <= EigenSample::trace_tolerance(&y), "{}", s.trace_check);
        }
    }

    #[test]
    fn deterministic_and_thread_independent() {
        assert_eq!(sample_ginoe(6, 99).unwrap(), sample_ginoe(6, 99).unwrap());
        let b = Binning::default_for(4, false);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| estimate_density(4, 3000, 5, b).unwrap());
        let c = estimate_density(4, 3000, 5, b).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn counting_identities() {
        let n = 4;
        let mut b = Binning::default_for(n, false);
        // Wide enough that nothing falls outside.
        b.real = Axis::new(-30.0, 30.0, 60).unwrap();
        b.complex_re = Axis::new(-30.0, 30.0, 6).unwrap();
        b.complex_im = Axis::new(0.0, 30.0, 3).unwrap();
        let est = estimate_density(n, 2000, 3, b).unwrap();
        assert_eq!(est.real_hist.outside + est.complex_hist.outside, 0);
        let mean = est.real_count_mean().unwrap();
        assert!((est.total_real_mass() - mean).abs() < 1e-12);
        assert!((est.total_complex_mass() - (n as f64 - mean) / 2.0).abs() < 1e-12);
        let by_density: f64 = est.real_hist.density.iter().sum::<f64>() * b.real.width();
        assert!((by_density - mean).abs() < 1e-12);
        // Complex pairs come two at a time: the real count has the parity of n.
        assert!(est.real_count_hist.iter().enumerate().all(|(k, &c)| k % 2 == 0 || c == 0));
    }

    #[test]
    fn validation() {
        assert!(sample_ginoe(3, 0).is_err());
        assert!(sample_ginoe(66, 0).is_err());
        assert!(Axis::new(1.0, 1.0, 3).is_err());
        let mut b = Binning::default_for(2, false);
        b.complex_im.lo = -1.0;
        assert!(estimate_density(2, 10, 0, b).is_err());
        let est = estimate_density(2, 10, 0, Binning::default_for(2, false)).unwrap();
        let e = compare(&est, &KernelModel::FiniteGinibre { m: 2 }).unwrap_err();
        assert!(matches!(e, Error::DimensionMismatch(_)));
        assert!(compare(&est, &KernelModel::Limit).is_err());
    }

    #[test]
    fn chi_square_tail() {
        // One bin with statistic (12 − 8)²/8 = 2: p = Q(1/2, 1) = erfc(1).
        let mk = |observed, expected| BinComparison {
            lo: 0.0,
            hi: 1.0,
            im_lo: None,
            im_hi: None,
            observed,
            expected,
            std_dev: None,
        };
        let bins = [mk(12, 8.0), mk(3, 1.0)];
        let c = ChiSquare::from_bins(bins.iter()).unwrap();
        assert_eq!(c.dof, 1);
        assert!((c.statistic - 2.0).abs() < 1e-15);
        assert!((c.p_value - crate::specfun::erfc(1.0)).abs() < 1e-15);
    }
}
