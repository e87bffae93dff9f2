//! β = 1 and β = 4 Hermitian ensembles through the same Pfaffian machinery.
//!
//! Joint density ∏w(y_n)|Δ(y)|^β on ℝ^N. For β = 1 the weighted polynomial is
//! q̃ = wq and ε is the ½sgn integral transform. For β = 4 the family has 2N
//! members, q̃ = √w·q and ε is differentiation, so
//! ε q̃ = (q′ + ½(ln w)′ q)√w. With that root the Gram Pfaffian is the
//! partition function itself, Z = (1/N!)∫|Δ|^β ∏w.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::correlations::{
    corr_fn, eps_real, skew_product_real, Configuration, CustomWeight, KernelModel, PointData,
    Poly, WeightSpec,
};
use crate::error::{Error, Result};
use crate::ginibre_kernel::{KernelBlock, SpectralPoint};
use crate::quad::{integrate_breaks, QuadOptions};
use crate::skewalg::{pfaffian, SkewMatrix};
use crate::specfun::sgn;

type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Beta {
    One,
    Four,
}

impl Beta {
    pub fn from_int(b: u32) -> Result<Self> {
        match b {
            1 => Ok(Beta::One),
            4 => Ok(Beta::Four),
            _ => Err(Error::Invalid(format!("beta must be 1 or 4, got {b}"))),
        }
    }

    pub fn value(self) -> u32 {
        match self {
            Beta::One => 1,
            Beta::Four => 4,
        }
    }

    /// b = √β.
    pub fn b(self) -> usize {
        match self {
            Beta::One => 1,
            Beta::Four => 2,
        }
    }
}

type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Weight on ℝ for a Hermitian ensemble.
#[derive(Clone)]
pub enum HermWeight {
    /// e^{−y²/2}.
    Gaussian,
    Custom {
        name: String,
        w: Fn1,
        /// (ln w)′ when known; otherwise ε falls back to a central difference.
        log_deriv: Option<Fn1>,
        breaks: Vec<f64>,
    },
}

impl fmt::Debug for HermWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HermWeight::Gaussian => write!(f, "Gaussian"),
            HermWeight::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl HermWeight {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            HermWeight::Gaussian => (-y * y / 2.0).exp(),
            HermWeight::Custom { w, .. } => w(y),
        }
    }

    pub fn log_deriv(&self) -> Option<Fn1> {
        match self {
            HermWeight::Gaussian => Some(Arc::new(|y: f64| -y)),
            HermWeight::Custom { log_deriv, .. } => log_deriv.clone(),
        }
    }

    pub fn breaks(&self) -> Vec<f64> {
        let mut b = vec![f64::NEG_INFINITY, f64::INFINITY];
        match self {
            HermWeight::Gaussian => b.push(0.0),
            HermWeight::Custom { breaks, .. } => b.extend(breaks.iter().copied()),
        }
        b
    }

    /// The same weight seen as a real-axis weight of the skew form.
    fn as_weight_spec(&self) -> WeightSpec {
        let this = self.clone();
        let breaks = match self {
            HermWeight::Gaussian => vec![0.0],
            HermWeight::Custom { breaks, .. } => breaks.clone(),
        };
        WeightSpec::Custom(CustomWeight {
            name: format!("{self:?}"),
            real: Arc::new(move |y| this.eval(y)),
            pair: Arc::new(|_| 0.0),
            real_breaks: breaks,
            radii: vec![],
        })
    }
}

#[derive(Debug, Clone)]
pub struct HermitianModel {
    pub beta: Beta,
    pub weight: HermWeight,
    pub n: usize,
}

impl HermitianModel {
    pub fn new(beta: Beta, weight: HermWeight, n: usize) -> Result<Self> {
        if n == 0 || n % 2 == 1 {
            return Err(Error::Invalid(format!("N must be even and positive, got {n}")));
        }
        Ok(HermitianModel { beta, weight, n })
    }

    /// Size of the polynomial family, N·b.
    pub fn family_size(&self) -> usize {
        self.n * self.beta.b()
    }
}

/// Monic Hermite polynomials He_0, …, He_{n−1}.
pub fn hermite_basis(n: usize) -> Vec<Poly> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let c = match k {
            0 => vec![1.0],
            1 => vec![0.0, 1.0],
            _ => {
                // He_k = y He_{k−1} − (k−1) He_{k−2}
                let mut c = vec![0.0; k + 1];
                for (i, &a) in out[k - 1].iter().enumerate() {
                    c[i + 1] += a;
                }
                for (i, &a) in out[k - 2].iter().enumerate() {
                    c[i] -= (k - 1) as f64 * a;
                }
                c
            }
        };
        out.push(c);
    }
    out.into_iter().map(Poly::new).collect()
}

fn weighted_tilde(model: &HermitianModel, q: &Poly, y: f64) -> f64 {
    match model.beta {
        Beta::One => model.weight.eval(y) * q.eval(y),
        Beta::Four => model.weight.eval(y).sqrt() * q.eval(y),
    }
}

/// ε q̃ at y.
fn eps_tilde(model: &HermitianModel, spec: &WeightSpec, q: &Poly, y: f64) -> Result<f64> {
    match model.beta {
        Beta::One => eps_real(spec, q, y),
        Beta::Four => {
            let w = &model.weight;
            match w.log_deriv() {
                Some(ld) => {
                    let sw = w.eval(y).sqrt();
                    if sw == 0.0 {
                        return Ok(0.0);
                    }
                    Ok((q.derivative().eval(y) + 0.5 * ld(y) * q.eval(y)) * sw)
                }
                None => {
                    let h = 1e-6 * (1.0 + y.abs());
                    let f = |t: f64| w.eval(t).sqrt() * q.eval(t);
                    Ok((f(y + h) - f(y - h)) / (2.0 * h))
                }
            }
        }
    }
}

/// ⟨g|h⟩ = ∫ g̃ ε h̃ − ε g̃ h̃ for the model's β.
pub fn herm_skew_product(model: &HermitianModel, g: &Poly, h: &Poly) -> Result<f64> {
    match model.beta {
        Beta::One => skew_product_real(&model.weight.as_weight_spec(), g, h),
        Beta::Four => {
            let spec = model.weight.as_weight_spec();
            let failure = std::sync::Mutex::new(None);
            let f = |y: f64| {
                let r = (|| -> Result<f64> {
                    Ok(weighted_tilde(model, g, y) * eps_tilde(model, &spec, h, y)?
                        - eps_tilde(model, &spec, g, y)? * weighted_tilde(model, h, y))
                })();
                r.unwrap_or_else(|e| {
                    failure.lock().unwrap().get_or_insert(e);
                    0.0
                })
            };
            // Central differences carry ~1e−10 noise; ask no more of the sum.
            let rel = if model.weight.log_deriv().is_some() { 1e-12 } else { 1e-8 };
            let breaks = model.weight.breaks();
            let scale = integrate_breaks(|y| f(y).abs(), &breaks, &QuadOptions::with_tol(0.0, 1e-3)).value;
            let r = integrate_breaks(f, &breaks, &QuadOptions::with_tol(rel * 1e-2 * scale, rel));
            if let Some(e) = failure.into_inner().unwrap() {
                return Err(e);
            }
            r.into_result()
        }
    }
}

/// Gram matrix of a Hermitian model and its kernel.
#[derive(Debug, Clone)]
pub struct HermitianKernel {
    model: HermitianModel,
    spec: WeightSpec,
    basis: Vec<Poly>,
    u: SkewMatrix,
    mu: DMatrix<f64>,
}

impl HermitianKernel {
    /// Uses the monic Hermite family.
    pub fn new(model: HermitianModel) -> Result<Self> {
        let basis = hermite_basis(model.family_size());
        Self::with_basis(model, basis)
    }

    pub fn with_basis(model: HermitianModel, basis: Vec<Poly>) -> Result<Self> {
        let nb = model.family_size();
        if basis.len() != nb {
            return Err(Error::DimensionMismatch(format!(
                "need {nb} basis polynomials, got {}",
                basis.len()
            )));
        }
        for (k, p) in basis.iter().enumerate() {
            if p.degree() != k || !p.is_monic() {
                return Err(Error::Invalid(format!(
                    "basis polynomial {k} must be monic of degree {k}"
                )));
            }
        }
        let mut um = DMatrix::<f64>::zeros(nb, nb);
        for i in 0..nb {
            for j in i + 1..nb {
                let v = herm_skew_product(&model, &basis[i], &basis[j])?;
                um[(i, j)] = v;
                um[(j, i)] = -v;
            }
        }
        let u = SkewMatrix::from_upper(nb, |i, j| C64::new(um[(i, j)], 0.0))?;
        let inv = um
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("Hermitian Gram matrix is not invertible".into()))?;
        let mu_raw = inv.transpose();
        let mu = (&mu_raw - mu_raw.transpose()) * 0.5;
        let resid = (&um * mu.transpose() - DMatrix::<f64>::identity(nb, nb)).amax();
        if !(resid <= 1e-8) {
            return Err(Error::Singular(format!(
                "Hermitian Gram matrix is ill conditioned: |U μᵀ − I| = {resid:e}"
            )));
        }
        let spec = model.weight.as_weight_spec();
        Ok(HermitianKernel { model, spec, basis, u, mu })
    }

    pub fn model(&self) -> &HermitianModel {
        &self.model
    }

    pub fn n(&self) -> usize {
        self.model.n
    }

    pub fn u(&self) -> &SkewMatrix {
        &self.u
    }

    /// Z = Pf U.
    pub fn partition(&self) -> f64 {
        pfaffian(&self.u).re
    }

    pub fn point_data(&self, ys: &[f64]) -> Result<Vec<PointData>> {
        ys.iter()
            .map(|&y| {
                let tilde = self
                    .basis
                    .iter()
                    .map(|q| C64::new(weighted_tilde(&self.model, q, y), 0.0))
                    .collect();
                let eps = self
                    .basis
                    .iter()
                    .map(|q| Ok(C64::new(eps_tilde(&self.model, &self.spec, q, y)?, 0.0)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(PointData {
                    point: SpectralPoint::real(y)?,
                    tilde,
                    eps,
                })
            })
            .collect()
    }

    /// Kernel with prefactor 2/b and E = ½sgn for β = 1, 0 for β = 4.
    pub fn block(&self, a: &PointData, b: &PointData) -> KernelBlock {
        let nb = self.basis.len();
        let pref = 2.0 / self.model.beta.b() as f64;
        let form = |u: &[C64], v: &[C64]| -> C64 {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..nb {
                for j in 0..nb {
                    acc += self.mu[(i, j)] * u[i] * v[j];
                }
            }
            pref * acc
        };
        let e = match (self.model.beta, a.point, b.point) {
            (Beta::One, SpectralPoint::Real(x), SpectralPoint::Real(y)) => 0.5 * sgn(x - y),
            _ => 0.0,
        };
        KernelBlock {
            ds: form(&a.tilde, &b.tilde),
            s: form(&a.tilde, &b.eps),
            s_rev: form(&b.tilde, &a.eps),
            is_plus_e: form(&a.eps, &b.eps) + e,
        }
    }

    pub fn kernel(&self, y: f64, yp: f64) -> Result<KernelBlock> {
        let d = self.point_data(&[y, yp])?;
        Ok(self.block(&d[0], &d[1]))
    }
}

pub fn herm_partition(model: &HermitianModel) -> Result<f64> {
    Ok(HermitianKernel::new(model.clone())?.partition())
}

/// R_n(y) as a Pfaffian of the model's kernel.
pub fn herm_corr(kernel: &Arc<HermitianKernel>, ys: &[f64]) -> Result<f64> {
    corr_fn(
        &KernelModel::Hermitian(kernel.clone()),
        &Configuration::new(ys.to_vec(), vec![])?,
    )
}
