//! Nyström solvers for the interior and exterior remainder functions.
//!
//! Boundary densities live at panel midpoints. Near and self interactions
//! use the exact panel integrals of `log|x - y|` and of its normal
//! derivative (the subtended angle); the smooth remainder of each kernel is
//! integrated with the midpoint rule.

mod exterior;
mod interior;
pub mod quad;

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exterior::{ExteriorField, ExteriorSolver, Source};
pub use interior::{extrapolate_k0, Extrapolated, InteriorField, InteriorSolver};

use crate::geometry::{GeometryError, Grading, Node};
use crate::linalg::{CMatrix, LinalgError};
use crate::qpgreen::{GreenError, Split};
use crate::{Point, C0};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BemError {
    #[error("at least 4 samples are needed for the local cubic model, got {0}")]
    TooFewSamples(usize),
    #[error("sample nodes must increase and bracket t = 0")]
    BadSamples,
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("Nystrom system: {0}")]
    Linalg(#[from] LinalgError),
    #[error("k^2 = {k2:.6} lies within the exclusion band of the Neumann eigenvalue {eigenvalue:.6}")]
    NeumannEigenvalue { k2: f64, eigenvalue: f64 },
    #[error("point ({0}, {1}) is within the boundary standoff {2:.3e}; evaluation there is unreliable")]
    Standoff(f64, f64, f64),
    #[error("exterior solves need the cell in the microscopic frame (period 1), got period {0}")]
    Unscaled(f64),
    #[error("point ({0}, {1}) lies outside the domain of this field")]
    OutsideDomain(f64, f64),
    #[error("source point ({0}, {1}) coincides with a quadrature node")]
    SourceOnNode(f64, f64),
    #[error("polynomial fit in k has relative residual {residual:.3e} above {tol:.1e}")]
    FitResidual { residual: f64, tol: f64 },
    #[error("target k = {target} is outside the extrapolation range (0, {upper})")]
    BadTarget { target: f64, upper: f64 },
}

/// Discretisation and safety settings shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BemOptions {
    /// Boundary nodes per unit cell.
    pub nodes: usize,
    pub grading: Grading,
    /// Largest admissible 1-norm condition number of a Nyström matrix.
    pub cond_limit: f64,
    /// Off-boundary evaluations closer than this many mesh spacings are refused.
    pub standoff_spacings: f64,
    /// Relative exclusion band around interior Neumann eigenvalues.
    pub neumann_margin: f64,
}

impl Default for BemOptions {
    fn default() -> Self {
        Self {
            nodes: 300,
            grading: Grading::Uniform,
            cond_limit: 1e12,
            standoff_spacings: 3.0,
            neumann_margin: 1e-3,
        }
    }
}

/// Double-layer and single-layer quadrature rows at `x`:
/// `k[j] ~ int_{panel j} d/dnu_y K(x, y)` and `s[j] ~ int_{panel j} K(x, y)`
/// against unit density.
pub(crate) fn kernel_row<F>(kernel: &F, x: Point, nodes: &[Node]) -> Result<(Vec<Complex64>, Vec<Complex64>), GreenError>
where
    F: Fn(Point, Point) -> Result<Split, GreenError>,
{
    let mut kr = Vec::with_capacity(nodes.len());
    let mut sr = Vec::with_capacity(nodes.len());
    let inv2pi = 1.0 / (2.0 * PI);
    for n in nodes {
        let sp = kernel(x, n.pos)?;
        let a = [n.panel[0][0] + sp.shift, n.panel[0][1]];
        let b = [n.panel[1][0] + sp.shift, n.panel[1][1]];
        let ang = quad::panel_angle(x, a, b);
        let lg = quad::panel_log_integral(x, a, b);
        let dn = sp.grad[0] * n.normal[0] + sp.grad[1] * n.normal[1];
        kr.push(sp.phase * (ang * inv2pi) + dn * n.weight);
        sr.push(sp.phase * (lg * inv2pi) + sp.value * n.weight);
    }
    Ok((kr, sr))
}

/// Rows for every node, assembled in parallel.
pub(crate) fn kernel_matrices<F>(kernel: &F, nodes: &[Node]) -> Result<(CMatrix, CMatrix), GreenError>
where
    F: Fn(Point, Point) -> Result<Split, GreenError> + Sync,
{
    let m = nodes.len();
    let rows: Vec<_> = nodes
        .par_iter()
        .map(|n| kernel_row(kernel, n.pos, nodes))
        .collect::<Result<_, _>>()?;
    let mut k = CMatrix::from_element(m, m, C0);
    let mut s = CMatrix::from_element(m, m, C0);
    for (i, (kr, sr)) in rows.into_iter().enumerate() {
        for j in 0..m {
            k[(i, j)] = kr[j];
            s[(i, j)] = sr[j];
        }
    }
    Ok((k, s))
}

/// Value at `x`, closer than `standoff` to the boundary point `p`, by cubic
/// interpolation along the ray from `p` through `x` between the boundary
/// trace at `p` and off-boundary values at 1, 3/2 and 2 standoffs.
pub(crate) fn along_normal<F>(x: Point, p: Point, standoff: f64, trace: Complex64, off: F) -> Result<Complex64, BemError>
where
    F: Fn(Point) -> Result<Complex64, BemError>,
{
    let d = (x[0] - p[0]).hypot(x[1] - p[1]);
    if d == 0.0 {
        return Ok(trace);
    }
    let u = [(x[0] - p[0]) / d, (x[1] - p[1]) / d];
    let ts = [0.0, standoff, 1.5 * standoff, 2.0 * standoff];
    let mut vals = [trace; 4];
    for (v, &t) in vals.iter_mut().zip(&ts).skip(1) {
        *v = off([p[0] + t * u[0], p[1] + t * u[1]])?;
    }
    let mut acc = C0;
    for i in 0..4 {
        let mut w = 1.0;
        for j in 0..4 {
            if j != i {
                w *= (d - ts[j]) / (ts[i] - ts[j]);
            }
        }
        acc += vals[i] * w;
    }
    Ok(acc)
}

pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn mat_vec(a: &CMatrix, x: &[Complex64]) -> Vec<Complex64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
        .collect()
}

#[cfg(test)]
mod tests;
