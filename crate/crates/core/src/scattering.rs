//! Aperture system, reflection coefficient, near and interior fields, and
//! aperture tuning.
//!
//! With `delta k` the scaled wavenumber and `(xi_i, h_i, eps_i, |D_i|)` the
//! scaled geometry:
//!
//! * `f_i = 2 i dk2 I0 exp(-i dk1 xi_i) (2 sin(dk2 h_i) / dk2 - r_i^d)`;
//! * `Q = diag(1 / (dk^2 |D_i|) + (2/pi) log(eps_i / 2)) + R`;
//! * `w = Q^{-1} f` (the integrals of the aperture densities);
//! * `I_s = sum_i w_i exp(i dk1 xi_i) (r_i - sin(dk2 h_i) / dk2) - I0 (1 - 2 i dk2 r^ex)`.

mod sweep;

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sweep::{
    find_resonances, relative_variation, resonance_report, sigma_min_q, sweep, sweep_interpolated, unwrap_phase,
    CouplingInterpolant, EigenBranch, Resonance, ResonanceKind, ResonanceOptions, ResonanceReport, SweepPoint,
    Trajectory,
};

use crate::bem::{BemError, InteriorSolver, Source};
use crate::farfield::{CouplingData, FarField, FarFieldError, FarFieldOptions};
use crate::geometry::{GeometryError, UnitCell, WaveParams};
use crate::linalg::{eigenvalues, frobenius, singular_values, CMatrix, Factorized, LinalgError};
use crate::qpgreen::Method;
use crate::{Point, C0, CI};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScatterError {
    #[error(transparent)]
    FarField(#[from] FarFieldError),
    #[error(transparent)]
    Bem(#[from] BemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("aperture half-length must lie in (0, 2) in the microscopic frame, got {0}")]
    BadAperture(f64),
    #[error("resonator {index}: tuned aperture half-length {eps:.6e} reaches half the width {half_width}")]
    ApertureTooWide { index: usize, eps: f64, half_width: f64 },
    #[error("resonance hit: sigma_min(Q) = {sigma_min:.3e} relative to |Q| = {norm:.3e}; eigenvalues of Q: {eigenvalues:?}")]
    ResonanceHit {
        sigma_min: f64,
        norm: f64,
        eigenvalues: Vec<Complex64>,
    },
    #[error("coupling data has {got} resonators, the cell {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("point ({0}, {1}) is not inside resonator {2}")]
    NotInside(f64, f64, usize),
    #[error("point ({0}, {1}) is below the ground or inside a resonator")]
    NotExterior(f64, f64),
    #[error("resonator index {index} out of range for a cell with {len} resonators")]
    BadIndex { index: usize, len: usize },
    #[error("linear algebra: {0}")]
    Linalg(#[from] LinalgError),
}

/// Aperture density `mu(t) = w / (pi sqrt(eps^2 - t^2))` on `(-eps, eps)`,
/// whose integral is `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevDensity {
    pub eps: f64,
    pub weight: Complex64,
}

impl ChebyshevDensity {
    pub fn value(&self, t: f64) -> Complex64 {
        if t.abs() >= self.eps {
            return C0;
        }
        self.weight / (PI * (self.eps * self.eps - t * t).sqrt())
    }

    /// Gauss–Chebyshev rule for `int mu(t) g(t) dt`: nodes `t_j` and weights
    /// such that the integral is `sum_j c_j g(t_j)`.
    pub fn rule(&self, n: usize) -> Vec<(f64, Complex64)> {
        (1..=n)
            .map(|j| {
                let t = self.eps * ((2 * j - 1) as f64 * PI / (2 * n) as f64).cos();
                (t, self.weight / n as f64)
            })
            .collect()
    }

    /// `int mu(t) g(t) dt` with an `n`-point Gauss–Chebyshev rule.
    pub fn integrate<F: Fn(f64) -> Complex64>(&self, n: usize, g: F) -> Complex64 {
        self.rule(n).into_iter().map(|(t, c)| c * g(t)).sum()
    }
}

/// `v (L^eps)^{-1}[1]`, the solution of `int log|t - s| mu(s) ds = v` on
/// `(-eps, eps)`: `mu(t) = v / (pi log(eps/2) sqrt(eps^2 - t^2))`.
pub fn hypersingular_inverse_const(eps: f64, v: Complex64) -> Result<ChebyshevDensity, ScatterError> {
    if !(eps > 0.0 && eps < 2.0) {
        return Err(ScatterError::BadAperture(eps));
    }
    Ok(ChebyshevDensity {
        eps,
        weight: v / (eps / 2.0).ln(),
    })
}

/// Forward operator `L[mu](t) = int_{-eps}^{eps} log|t - s| mu(s) ds` for
/// `t` in `(-eps, eps)`, by quadrature independent of the closed form: with
/// `s = eps cos(phi)` the weight becomes smooth and the remaining log
/// singularity at `phi_0 = acos(t / eps)` is resolved by geometrically graded
/// Gauss panels.
pub fn log_operator(mu: &ChebyshevDensity, t: f64) -> Complex64 {
    let eps = mu.eps;
    let phi0 = (t / eps).clamp(-1.0, 1.0).acos();
    let (x, w) = crate::bem::quad::gauss_legendre(16);
    let f = |phi: f64| (t - eps * phi.cos()).abs().ln();
    let panel = |a: f64, b: f64| -> f64 {
        x.iter()
            .zip(&w)
            .map(|(xi, wi)| 0.5 * (b - a) * wi * f(0.5 * (a + b) + 0.5 * (b - a) * xi))
            .sum()
    };
    let mut acc = 0.0;
    // innermost piece: log(eps sin(phi_0) |phi - phi_0|) integrated exactly
    let tiny = 1e-9;
    let near = |d: f64| d * ((eps * phi0.sin() * d).ln() - 1.0);
    for (len, dir) in [(phi0, -1.0), (PI - phi0, 1.0)] {
        let mut outer = len;
        while outer > tiny {
            let inner = (0.15 * outer).max(tiny);
            let (a, b) = (phi0 + dir * inner, phi0 + dir * outer);
            acc += panel(a.min(b), a.max(b));
            outer = inner;
        }
        acc += near(outer.min(len));
    }
    mu.weight * acc / PI
}

/// `int_{-eps}^{eps} log|zeta - t| / (pi sqrt(eps^2 - t^2)) dt` for complex
/// `zeta`: `log|(zeta + sqrt(zeta^2 - eps^2)) / 2|` on the branch with
/// modulus at least `eps`.
pub fn chebyshev_log_potential(eps: f64, zeta: Complex64) -> f64 {
    let s = (zeta - eps).sqrt() * (zeta + eps).sqrt();
    ((zeta + s).norm().max((zeta - s).norm()) / 2.0).ln()
}

/// Physical geometry and wave seen in the microscopic frame.
struct Scaled {
    dk: f64,
    dk1: f64,
    dk2: f64,
    cell: UnitCell,
}

fn scaled(cell: &UnitCell, wave: &WaveParams) -> Scaled {
    let w = wave.scaled(cell.delta);
    Scaled {
        dk: w.k,
        dk1: w.k1(),
        dk2: w.k2(),
        cell: cell.scaled(),
    }
}

fn check_size(cell: &UnitCell, coupling: &CouplingData) -> Result<(), ScatterError> {
    if cell.len() != coupling.len() {
        return Err(ScatterError::SizeMismatch {
            expected: cell.len(),
            got: coupling.len(),
        });
    }
    Ok(())
}

/// Right-hand side `f` of the aperture system.
pub fn assemble_f(cell: &UnitCell, wave: &WaveParams, coupling: &CouplingData) -> Result<Vec<Complex64>, ScatterError> {
    check_size(cell, coupling)?;
    let s = scaled(cell, wave);
    Ok(s.cell
        .resonators
        .iter()
        .zip(&coupling.r_del)
        .map(|(r, rd)| {
            2.0 * CI
                * s.dk2
                * wave.i0
                * Complex64::from_polar(1.0, -s.dk1 * r.xi)
                * (2.0 * (s.dk2 * r.h).sin() / s.dk2 - rd)
        })
        .collect())
}

/// The aperture matrix `Q`.
pub fn assemble_q(cell: &UnitCell, wave: &WaveParams, coupling: &CouplingData) -> Result<CMatrix, ScatterError> {
    check_size(cell, coupling)?;
    let s = scaled(cell, wave);
    let mut q = coupling.matrix();
    for (i, r) in s.cell.resonators.iter().enumerate() {
        if !(r.eps > 0.0 && r.eps < 2.0) {
            return Err(ScatterError::BadAperture(r.eps));
        }
        q[(i, i)] += 1.0 / (s.dk * s.dk * r.area()) + 2.0 / PI * (r.eps / 2.0).ln();
    }
    Ok(q)
}

/// Solution of the aperture system and the reflection coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterSolution {
    pub k: f64,
    pub theta: f64,
    pub i0: f64,
    pub q: Vec<Vec<Complex64>>,
    pub f: Vec<Complex64>,
    /// `w = Q^{-1} f`, the integrals of the aperture densities.
    pub weights: Vec<Complex64>,
    pub i_s: Complex64,
    pub abs_i_s: f64,
    /// Phase of `I_s` in `(-pi, pi]`.
    pub phase_i_s: f64,
    pub eig_q: Vec<Complex64>,
    pub sigma_min: f64,
    pub cond_q: f64,
    pub residual: f64,
    /// `N max(eps_i) |Q^{-1}|_F` in the microscopic frame.
    pub error_budget: f64,
}

/// `I_s` from stored weights and constants.
pub fn reflection(cell: &UnitCell, wave: &WaveParams, coupling: &CouplingData, weights: &[Complex64]) -> Complex64 {
    let s = scaled(cell, wave);
    let mut acc = C0;
    for ((r, ri), w) in s.cell.resonators.iter().zip(&coupling.r).zip(weights) {
        acc += w * Complex64::from_polar(1.0, s.dk1 * r.xi) * (ri - (s.dk2 * r.h).sin() / s.dk2);
    }
    acc - wave.i0 * (1.0 - 2.0 * CI * s.dk2 * coupling.r_ex)
}

/// Relative size of `sigma_min(Q)` below which `Q` counts as singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-13;

/// Solves `Q w = f` and evaluates `I_s`.
pub fn solve_is(cell: &UnitCell, wave: &WaveParams, coupling: &CouplingData) -> Result<ScatterSolution, ScatterError> {
    let f = assemble_f(cell, wave, coupling)?;
    let q = assemble_q(cell, wave, coupling)?;
    let n = f.len();
    let (weights, eig_q, sigma_min, cond_q, residual, budget) = if n == 0 {
        (Vec::new(), Vec::new(), f64::INFINITY, 1.0, 0.0, 0.0)
    } else {
        let sv = singular_values(&q);
        let sigma_min = *sv.last().expect("non-empty");
        let norm = sv[0];
        let eig = eigenvalues(&q);
        if sigma_min < SINGULAR_THRESHOLD * norm {
            return Err(ScatterError::ResonanceHit {
                sigma_min,
                norm,
                eigenvalues: eig,
            });
        }
        let fac = Factorized::with_limit(q.clone(), f64::INFINITY)?;
        let w = fac.solve(&f);
        let res = fac.residual(&w, &f);
        let inv = q.clone().try_inverse().ok_or(LinalgError::Singular)?;
        let eps_max = cell.scaled().resonators.iter().map(|r| r.eps).fold(0.0, f64::max);
        (w, eig, sigma_min, norm / sigma_min, res, n as f64 * eps_max * frobenius(&inv))
    };
    let i_s = reflection(cell, wave, coupling, &weights);
    Ok(ScatterSolution {
        k: wave.k,
        theta: wave.theta,
        i0: wave.i0,
        q: (0..n).map(|i| (0..n).map(|j| q[(i, j)]).collect()).collect(),
        f,
        weights,
        i_s,
        abs_i_s: i_s.norm(),
        phase_i_s: i_s.arg(),
        eig_q,
        sigma_min,
        cond_q,
        residual,
        error_budget: budget,
    })
}

/// Aperture half-lengths (physical units) from the tuning rule
/// `eps_i = 2 exp(-(pi/2) (1 / (|D_i| dk^2) + lambda))` in the microscopic frame.
pub fn tuned_apertures(cell: &UnitCell, wave: &WaveParams, lambda: f64) -> Result<Vec<f64>, ScatterError> {
    let s = scaled(cell, wave);
    let mut out = Vec::with_capacity(cell.len());
    for (index, r) in s.cell.resonators.iter().enumerate() {
        let eps = 2.0 * (-(PI / 2.0) * (1.0 / (r.area() * s.dk * s.dk) + lambda)).exp();
        if eps >= 0.5 * r.l {
            return Err(ScatterError::ApertureTooWide {
                index,
                eps: eps * cell.delta,
                half_width: 0.5 * r.l * cell.delta,
            });
        }
        if eps < 1e-12 {
            log::warn!("resonator {}: tuned aperture half-length {eps:.3e} is below 1e-12", index + 1);
        }
        out.push(eps * cell.delta);
    }
    Ok(out)
}

/// The cell with its apertures replaced by the tuned ones.
pub fn tune_apertures(cell: &UnitCell, wave: &WaveParams, lambda: f64) -> Result<UnitCell, ScatterError> {
    let eps = tuned_apertures(cell, wave, lambda)?;
    let resonators = cell
        .resonators
        .iter()
        .zip(eps)
        .map(|(r, eps)| crate::geometry::Resonator { eps, ..*r })
        .collect();
    Ok(UnitCell::new(cell.delta, resonators)?)
}

/// The `k` in `ks` at which two eigenvalues of the coupling matrix come
/// closest, with that distance; the optional multiplicity search before tuning.
pub fn closest_eigenvalue_pair(
    cell: &UnitCell,
    theta: f64,
    ks: &[f64],
    opts: FarFieldOptions,
) -> Result<Option<(f64, f64)>, ScatterError> {
    let mut best: Option<(f64, f64)> = None;
    for &k in ks {
        let wave = WaveParams::new(k, theta, 1.0)?;
        let c = crate::farfield::assemble_coupling(cell, &wave, opts)?;
        let e = c.eigenvalues();
        for i in 0..e.len() {
            for j in i + 1..e.len() {
                let d = (e[i] - e[j]).norm();
                if best.is_none_or(|b| d < b.1) {
                    best = Some((k, d));
                }
            }
        }
    }
    Ok(best)
}

/// Geometry, wave, coupling data and aperture solution, with the field
/// evaluators built on them.
#[derive(Debug)]
pub struct Scatterer {
    cell: UnitCell,
    wave: WaveParams,
    far: FarField,
    coupling: CouplingData,
    solution: ScatterSolution,
    opts: FarFieldOptions,
    interior: Vec<OnceLock<Result<InteriorSolver, BemError>>>,
}

/// Gauss–Chebyshev nodes for aperture integrals.
const APERTURE_NODES: usize = 8;

impl Scatterer {
    pub fn new(cell: &UnitCell, wave: &WaveParams, opts: FarFieldOptions) -> Result<Self, ScatterError> {
        let far = FarField::new(cell, wave, opts)?;
        let coupling = far.coupling()?;
        Self::with_coupling(cell, wave, far, coupling, opts)
    }

    /// Reuses coupling data computed for the same geometry (the coupling
    /// matrix does not depend on the apertures).
    pub fn with_coupling(
        cell: &UnitCell,
        wave: &WaveParams,
        far: FarField,
        coupling: CouplingData,
        opts: FarFieldOptions,
    ) -> Result<Self, ScatterError> {
        let solution = solve_is(cell, wave, &coupling)?;
        Ok(Self {
            cell: cell.clone(),
            wave: *wave,
            far,
            coupling,
            solution,
            opts,
            interior: (0..cell.len()).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn cell(&self) -> &UnitCell {
        &self.cell
    }

    pub fn wave(&self) -> &WaveParams {
        &self.wave
    }

    pub fn coupling(&self) -> &CouplingData {
        &self.coupling
    }

    pub fn solution(&self) -> &ScatterSolution {
        &self.solution
    }

    pub fn far_field(&self) -> &FarField {
        &self.far
    }

    /// Incident wave `U0(z)`.
    pub fn incident(&self, z: Point) -> Complex64 {
        self.wave.i0 * Complex64::from_polar(1.0, -self.wave.k1() * z[0] - self.wave.k2() * z[1])
    }

    /// The outgoing plane wave `exp(-i k1 z1) exp(i k2 z2)`.
    pub fn outgoing(&self, z: Point) -> Complex64 {
        Complex64::from_polar(1.0, -self.wave.k1() * z[0] + self.wave.k2() * z[1])
    }

    /// `U0(z) + I_s exp(-i k1 z1) exp(i k2 z2)`, the far-field limit.
    pub fn far_limit(&self, z: Point) -> Complex64 {
        self.incident(z) + self.solution.i_s * self.outgoing(z)
    }

    /// Total field `U^k(z)` above the ground and outside the resonators,
    /// beyond the boundary standoff.
    pub fn near_field(&self, z: Point) -> Result<Complex64, ScatterError> {
        let d = self.cell.delta;
        let zs = [z[0] / d, z[1] / d];
        let red = [zs[0] - zs[0].round(), zs[1]];
        if zs[1] < 0.0 || self.far.cell().resonator_containing(red).is_some() {
            return Err(ScatterError::NotExterior(z[0], z[1]));
        }
        let base = self.incident(z) - self.wave.i0 * self.outgoing(z);
        if self.cell.is_empty() {
            return Ok(base);
        }
        let solver = self.far.solver();
        let field = solver.solve(Source::Exterior(zs))?;
        let green = solver.green();
        let mut acc = C0;
        for (r, w) in self.far.cell().resonators.iter().zip(&self.solution.weights) {
            let a = r.aperture_center();
            let n = green.gamma_plus(zs, a, Method::Auto).map_err(BemError::from)? + field.value(a)?;
            acc += n * w;
        }
        let dk2 = self.far.wave().k2();
        acc += 2.0 * CI * self.wave.i0 * dk2 * field.far_coefficient();
        Ok(acc + base)
    }

    fn interior_solver(&self, i: usize) -> Result<&InteriorSolver, ScatterError> {
        let r = self.far.cell().resonators[i];
        let count = self.far.interior_nodes(i);
        let k = self.far.wave().k;
        let bem = self.opts.bem;
        self.interior[i]
            .get_or_init(|| InteriorSolver::new(&r, count, k, &bem))
            .as_ref()
            .map_err(|e| e.clone().into())
    }

    /// Field inside resonator `i`, `u(z) = -int_{aperture} mu_i(y) N_{i,d}(z, y) dy`.
    pub fn interior_field(&self, i: usize, z: Point) -> Result<Complex64, ScatterError> {
        if i >= self.cell.len() {
            return Err(ScatterError::BadIndex {
                index: i,
                len: self.cell.len(),
            });
        }
        let d = self.cell.delta;
        let r = self.far.cell().resonators[i];
        let shift = (z[0] / d - r.xi).round();
        let zs = [z[0] / d - shift, z[1] / d];
        if !r.contains(zs) {
            return Err(ScatterError::NotInside(z[0], z[1], i));
        }
        let solver = self.interior_solver(i)?;
        let gap = (zs[0] - r.xi).abs().max(r.eps) - r.eps;
        let dist = gap.hypot(r.h - zs[1]);
        if dist < solver.standoff() {
            return Err(BemError::Standoff(z[0], z[1], solver.standoff()).into());
        }
        let mu = ChebyshevDensity {
            eps: r.eps,
            weight: self.solution.weights[i],
        };
        let mut acc = C0;
        for (t, c) in mu.rule(APERTURE_NODES) {
            let f = solver.solve([r.xi + t, r.h])?;
            acc += c * f.neumann(zs)?;
        }
        // quasi-periodic copy of the resonator
        Ok(-acc * Complex64::from_polar(1.0, -self.far.wave().k1() * shift))
    }

    /// `I_s` recomputed from the stored weights and constants.
    pub fn reflection(&self) -> Complex64 {
        reflection(&self.cell, &self.wave, &self.coupling, &self.solution.weights)
    }

    /// Total field anywhere: inside a resonator, outside it, or `None` where
    /// the point is refused (standoff, ground).
    pub fn field(&self, z: Point) -> Option<Complex64> {
        let d = self.cell.delta;
        let zs = [z[0] / d, z[1] / d];
        let red = [zs[0] - zs[0].round(), zs[1]];
        match self.far.cell().resonator_containing(red) {
            Some(i) => self.interior_field(i, z).ok(),
            None => self.near_field(z).ok(),
        }
    }
}

#[cfg(test)]
mod tests;
