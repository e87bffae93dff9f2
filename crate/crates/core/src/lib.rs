//! Pfaffian point processes for real asymmetric random matrices.
//!
//! Correlation functions of the real Ginibre ensemble (and of generic weights
//! and the β = 1, 4 Hermitian ensembles) as Pfaffians of 2×2 matrix kernels,
//! with quadrature and Monte Carlo oracles to check them.

pub mod correlations;
pub mod error;
pub mod ginibre_kernel;
pub mod hermitian;
pub mod limits;
pub mod quad;
pub mod sampler;
pub mod selftest;
pub mod skewalg;
pub mod specfun;

pub use error::{Error, Result};
pub use ginibre_kernel::{KernelBlock, SpectralPoint};
pub use num_complex::Complex64 as C64;
pub use skewalg::{pfaffian, SkewMatrix};
