//! Special functions used by the Green's-function kernels.
//!
//! Only real arguments are needed for the Bessel family (the kernels are
//! evaluated at `k |z - x|` with real `k`), while the Ewald representation
//! needs the complementary error function of complex argument, which is
//! computed through the Faddeeva function `w(z) = exp(-z^2) erfc(-iz)`.

mod bessel;
mod expint;
mod faddeeva;

pub use bessel::{bessel_j0_j1, bessel_y0_y1, hankel1, hankel1_pair};
pub use expint::{ein, expint_e1, expint_ladder};
pub use faddeeva::{erfc_complex, faddeeva_w};

use thiserror::Error;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecFunError {
    #[error("Hankel function requires a positive real argument, got {0}")]
    NonPositiveArgument(f64),
    #[error("only orders 0 and 1 are supported, got {0}")]
    UnsupportedOrder(u32),
}
