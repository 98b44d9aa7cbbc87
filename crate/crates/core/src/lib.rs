//! Reflection of plane waves from a periodic metasurface of rectangular
//! Helmholtz resonators.
//!
//! The crate is organised bottom-up:
//!
//! - [`specfun`]: Hankel functions, the Faddeeva function and exponential integrals.
//! - [`qpgreen`]: the quasi-periodic half-plane Green's function (spectral and Ewald forms).
//! - [`geometry`]: unit cells, incident waves, boundary meshes and assumption checks.
//! - [`bem`]: Nyström solvers for the interior and exterior Neumann remainders.
//! - [`farfield`]: far-field constants and the coupling matrix.
//! - [`scattering`]: the resonance matrix, the reflected amplitude, fields and aperture tuning.
//! - [`selftest`]: Helmholtz-residual, period-doubling and far-field consistency suites.
//! - [`config`]: run configuration files.
//! - [`cli`]: sweeps and the command-line front end.

pub mod bem;
pub mod cli;
pub mod config;
pub mod farfield;
pub mod geometry;
pub mod linalg;
pub mod qpgreen;
pub mod scattering;
pub mod selftest;
pub mod specfun;

pub use num_complex::Complex64;

/// Two-dimensional point `(x1, x2)`.
pub type Point = [f64; 2];

pub(crate) const C0: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const CI: Complex64 = Complex64::new(0.0, 1.0);
