//! Antisymmetric linear algebra over complex scalars.
//!
//! The Pfaffian is computed by Parlett–Reid style skew elimination: at each
//! step the largest-magnitude candidate below the current 2×2 diagonal block
//! is swapped into the pivot position and the trailing submatrix receives a
//! rank-2 skew update. The Pfaffian is the product of pivots times the parity
//! of the swaps. Dimensions 2 and 4 use the expansion formulas directly.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ginibre_kernel::{KernelBlock, SpectralPoint};

type C64 = Complex64;

/// Relative antisymmetry tolerance applied on construction.
pub const SKEW_TOLERANCE: f64 = 1e-12;

/// Pivots smaller than this fraction of the max-norm make the Pfaffian zero.
pub const PIVOT_TOLERANCE: f64 = 1e-13;

/// Even-dimensional antisymmetric complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix {
    dim: usize,
    entries: Vec<C64>,
}

impl SkewMatrix {
    /// Validates dimension and antisymmetry, then stores the exactly
    /// antisymmetrized entries `(A − Aᵀ)/2`.
    pub fn new(dim: usize, entries: Vec<C64>) -> Result<Self> {
        if dim == 0 || dim % 2 == 1 {
            return Err(Error::OddDimension(dim));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for dimension {dim}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        let max = entries.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tolerance = SKEW_TOLERANCE * max;
        let mut deviation: f64 = 0.0;
        for i in 0..dim {
            for j in i..dim {
                let d = (entries[i * dim + j] + entries[j * dim + i]).norm();
                deviation = deviation.max(d);
            }
        }
        if deviation > tolerance {
            return Err(Error::NotSkew {
                deviation,
                tolerance,
            });
        }
        let mut clean = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for j in (i + 1)..dim {
                let v = (entries[i * dim + j] - entries[j * dim + i]) * 0.5;
                clean[i * dim + j] = v;
                clean[j * dim + i] = -v;
            }
        }
        Ok(SkewMatrix {
            dim,
            entries: clean,
        })
    }

    /// Builds the matrix from its strict upper triangle; always antisymmetric.
    pub fn from_upper(dim: usize, mut upper: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        if dim == 0 || dim % 2 == 1 {
            return Err(Error::OddDimension(dim));
        }
        let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for j in (i + 1)..dim {
                let v = upper(i, j);
                entries[i * dim + j] = v;
                entries[j * dim + i] = -v;
            }
        }
        Ok(SkewMatrix { dim, entries })
    }

    pub fn from_dmatrix(m: &DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix is not square",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let entries = (0..n * n).map(|k| m[(k / n, k % n)]).collect();
        SkewMatrix::new(n, entries)
    }

    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        SkewMatrix::new(dim, entries.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn to_dmatrix(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn max_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn neg(&self) -> SkewMatrix {
        SkewMatrix {
            dim: self.dim,
            entries: self.entries.iter().map(|z| -z).collect(),
        }
    }

    /// Principal submatrix on the given (even number of) indices.
    pub fn submatrix(&self, idx: &[usize]) -> Result<SkewMatrix> {
        let k = idx.len();
        SkewMatrix::from_upper(k, |a, b| self.get(idx[a], idx[b]))
    }

    /// Block-diagonal direct sum.
    pub fn direct_sum(&self, other: &SkewMatrix) -> SkewMatrix {
        let n = self.dim + other.dim;
        let mut entries = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..self.dim {
            for j in 0..self.dim {
                entries[i * n + j] = self.get(i, j);
            }
        }
        for i in 0..other.dim {
            for j in 0..other.dim {
                entries[(i + self.dim) * n + j + self.dim] = other.get(i, j);
            }
        }
        SkewMatrix { dim: n, entries }
    }

    /// The 2T×2T matrix with T diagonal copies of [[0, 1], [−1, 0]].
    pub fn standard_symplectic(t: usize) -> SkewMatrix {
        let n = 2 * t;
        let mut entries = vec![C64::new(0.0, 0.0); n * n];
        for k in 0..t {
            entries[(2 * k) * n + 2 * k + 1] = C64::new(1.0, 0.0);
            entries[(2 * k + 1) * n + 2 * k] = C64::new(-1.0, 0.0);
        }
        SkewMatrix { dim: n, entries }
    }
}

/// Pfaffian together with the smallest pivot ratio seen during elimination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfaffianReport {
    pub value: C64,
    /// min |pivot| / max-norm; 1 for the closed-form small cases, 0 when the
    /// elimination stopped on a negligible pivot.
    pub min_pivot_ratio: f64,
}

pub fn pfaffian(a: &SkewMatrix) -> C64 {
    pfaffian_report(a).value
}

pub fn pfaffian_report(a: &SkewMatrix) -> PfaffianReport {
    let n = a.dim;
    let e = &a.entries;
    match n {
        2 => {
            return PfaffianReport {
                value: e[1],
                min_pivot_ratio: 1.0,
            }
        }
        4 => {
            let (p01, p02, p03) = (e[1], e[2], e[3]);
            let (p12, p13, p23) = (e[6], e[7], e[11]);
            return PfaffianReport {
                value: p01 * p23 - p02 * p13 + p03 * p12,
                min_pivot_ratio: 1.0,
            };
        }
        _ => {}
    }
    let max = a.max_norm();
    let zero = PfaffianReport {
        value: C64::new(0.0, 0.0),
        min_pivot_ratio: 0.0,
    };
    if max == 0.0 {
        return zero;
    }
    let threshold = PIVOT_TOLERANCE * max;
    let mut m = e.clone();
    let mut pf = C64::new(1.0, 0.0);
    let mut min_ratio = f64::INFINITY;
    let mut k = 0;
    while k + 1 < n {
        // Pivot search in column k below the diagonal.
        let mut kp = k + 1;
        let mut best = m[(k + 1) * n + k].norm();
        for i in (k + 2)..n {
            let v = m[i * n + k].norm();
            if v > best {
                best = v;
                kp = i;
            }
        }
        if kp != k + 1 {
            swap_rows_cols(&mut m, n, k + 1, kp);
            pf = -pf;
        }
        if best < threshold {
            return zero;
        }
        min_ratio = min_ratio.min(best / max);
        let pivot = m[k * n + k + 1];
        pf *= pivot;
        if k + 2 < n {
            let tau: Vec<C64> = ((k + 2)..n).map(|j| m[k * n + j] / pivot).collect();
            let col: Vec<C64> = ((k + 2)..n).map(|i| m[i * n + k + 1]).collect();
            let len = n - k - 2;
            for a in 0..len {
                let row = (k + 2 + a) * n;
                for b in 0..len {
                    m[row + k + 2 + b] += tau[a] * col[b] - col[a] * tau[b];
                }
            }
        }
        k += 2;
    }
    PfaffianReport {
        value: pf,
        min_pivot_ratio: min_ratio,
    }
}

fn swap_rows_cols(m: &mut [C64], n: usize, a: usize, b: usize) {
    for j in 0..n {
        m.swap(a * n + j, b * n + j);
    }
    for i in 0..n {
        m.swap(i * n + a, i * n + b);
    }
}

/// Determinant by partial-pivot LU, used for the congruence identity.
pub fn determinant(m: &DMatrix<C64>) -> Result<C64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix has no determinant",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.clone().lu().determinant())
}

/// 2×2 block as [[a, b], [c, d]].
pub type Block2 = [[C64; 2]; 2];

/// Both sides of the block-sum expansion of Pf(J + K).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSumExpansion {
    pub direct: C64,
    pub expansion: C64,
}

/// Evaluates Pf(J + K) directly and as 1 + Σ over nonempty index subsets of
/// the Pfaffian of the corresponding principal block submatrix of K.
///
/// `blocks` is the T×T array of 2×2 blocks in row-major order.
pub fn pf_block_sum(t: usize, blocks: &[Block2]) -> Result<BlockSumExpansion> {
    if blocks.len() != t * t {
        return Err(Error::DimensionMismatch(format!(
            "{} blocks supplied for T = {t}",
            blocks.len()
        )));
    }
    if t == 0 {
        return Err(Error::Invalid("block count must be positive".into()));
    }
    if t > 20 {
        return Err(Error::Invalid(format!(
            "subset expansion over T = {t} blocks is too large"
        )));
    }
    let k = assemble_blocks(t, blocks)?;
    let j = SkewMatrix::standard_symplectic(t);
    let sum = SkewMatrix::new(
        2 * t,
        k.entries
            .iter()
            .zip(&j.entries)
            .map(|(a, b)| a + b)
            .collect(),
    )?;
    let direct = pfaffian(&sum);
    let mut expansion = C64::new(1.0, 0.0);
    for mask in 1u32..(1u32 << t) {
        let idx: Vec<usize> = (0..t)
            .filter(|s| mask & (1 << s) != 0)
            .flat_map(|s| [2 * s, 2 * s + 1])
            .collect();
        expansion += pfaffian(&k.submatrix(&idx)?);
    }
    Ok(BlockSumExpansion { direct, expansion })
}

fn assemble_blocks(t: usize, blocks: &[Block2]) -> Result<SkewMatrix> {
    let n = 2 * t;
    let mut entries = vec![C64::new(0.0, 0.0); n * n];
    for a in 0..t {
        for b in 0..t {
            let blk = &blocks[a * t + b];
            for r in 0..2 {
                for c in 0..2 {
                    entries[(2 * a + r) * n + 2 * b + c] = blk[r][c];
                }
            }
        }
    }
    SkewMatrix::new(n, entries)
}

/// |Pf(C^{-T} − AᵀBA)/Pf(C^{-T}) − Pf(B^{-T} − ACAᵀ)/Pf(B^{-T})|
/// for A of shape 2J×2K, B skew of dim 2J, C skew of dim 2K.
pub fn cauchy_binet_residual(a: &DMatrix<C64>, b: &SkewMatrix, c: &SkewMatrix) -> Result<f64> {
    if a.nrows() != b.dim() || a.ncols() != c.dim() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, B has dim {}, C has dim {}",
            a.nrows(),
            a.ncols(),
            b.dim(),
            c.dim()
        )));
    }
    let bm = b.to_dmatrix();
    let cm = c.to_dmatrix();
    let b_inv_t = bm
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("B is not invertible".into()))?
        .transpose();
    let c_inv_t = cm
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("C is not invertible".into()))?
        .transpose();
    let left_m = &c_inv_t - a.transpose() * &bm * a;
    let right_m = &b_inv_t - a * &cm * a.transpose();
    let left = pfaffian(&SkewMatrix::from_dmatrix(&left_m)?)
        / pfaffian(&SkewMatrix::from_dmatrix(&c_inv_t)?);
    let right = pfaffian(&SkewMatrix::from_dmatrix(&right_m)?)
        / pfaffian(&SkewMatrix::from_dmatrix(&b_inv_t)?);
    Ok((left - right).norm())
}

/// Returns (Pf(D A Dᵀ), Pf(A) det D).
pub fn pf_congruence(a: &SkewMatrix, d: &DMatrix<C64>) -> Result<(C64, C64)> {
    if d.nrows() != a.dim() || d.ncols() != a.dim() {
        return Err(Error::DimensionMismatch(format!(
            "D is {}x{}, A has dim {}",
            d.nrows(),
            d.ncols(),
            a.dim()
        )));
    }
    let congruent = d * a.to_dmatrix() * d.transpose();
    let lhs = pfaffian(&SkewMatrix::from_dmatrix(&congruent)?);
    Ok((lhs, pfaffian(a) * determinant(d)?))
}

/// Points with their pairwise 2×2 kernel blocks; assembles to a 2T×2T
/// antisymmetric matrix.
#[derive(Debug, Clone)]
pub struct BlockKernelMatrix {
    pub points: Vec<SpectralPoint>,
    /// T×T blocks, row-major.
    pub blocks: Vec<KernelBlock>,
}

impl BlockKernelMatrix {
    pub fn new(points: Vec<SpectralPoint>, blocks: Vec<KernelBlock>) -> Result<Self> {
        if blocks.len() != points.len() * points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} blocks for {} points",
                blocks.len(),
                points.len()
            )));
        }
        Ok(BlockKernelMatrix { points, blocks })
    }

    pub fn assemble(&self) -> Result<SkewMatrix> {
        let t = self.points.len();
        let mats: Vec<Block2> = self.blocks.iter().map(|b| b.matrix()).collect();
        assemble_blocks(t, &mats)
    }
}
