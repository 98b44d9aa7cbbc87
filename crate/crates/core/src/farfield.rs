//! Far-field constants of the exterior remainders and the coupling matrix.
//!
//! All computations run in the microscopic frame (period 1, wavenumber
//! `delta k`). With `a_i` the aperture centre of resonator `i`:
//!
//! * `r_i^d`: `R+d(a_i, x) ~ exp(-i k1 z1) exp(i k1 x1) exp(i k2 x2) r_i^d` as `x2 -> infinity`;
//! * `r_i`: `R+(z, a_i) ~ exp(-i k1 z1) exp(i k2 z2) exp(i k1 x1) r_i` as `z2 -> infinity`;
//! * `r^ex`: `R+(z, x) ~ exp(-i k1 z1) exp(i k1 x1) exp(i k2 z2) exp(i k2 x2) r^ex`.
//!
//! Each constant comes from an exact projection onto the propagating mode
//! and is cross-checked against direct evaluations at two heights.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bem::{extrapolate_k0, BemError, BemOptions, ExteriorField, ExteriorSolver, InteriorSolver, Source};
use crate::geometry::{build_mesh, GeometryError, UnitCell, WaveParams};
use crate::linalg::{eigenvalues, CMatrix};
use crate::qpgreen::{GreenError, GreenOptions, Method};
use crate::{Point, C0};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FarFieldError {
    #[error(transparent)]
    Bem(#[from] BemError),
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{what}: extraction at heights {low} and {high} is not converged (spread {spread:.3e}, tail bound {bound:.3e}); raise the extraction height")]
    HeightTooSmall {
        what: String,
        low: f64,
        high: f64,
        spread: f64,
        bound: f64,
    },
    #[error("resonator index {index} out of range for a cell with {len} resonators")]
    BadIndex { index: usize, len: usize },
    #[error("resonator {index}: {source}")]
    Resonator {
        index: usize,
        #[source]
        source: BemError,
    },
}

/// Smallest default node count of an interior solve.
pub const MIN_INTERIOR_NODES: usize = 160;

/// Settings for the extractions and the coupling assembly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarFieldOptions {
    pub bem: BemOptions,
    pub green: GreenOptions,
    /// Target size of the evanescent tail at the extraction height.
    pub tail_tol: f64,
    /// Fixed extraction height (microscopic frame) instead of the automatic one.
    pub height: Option<f64>,
    /// Nodes per interior solve; `None` takes each resonator's share of the
    /// cell mesh, but at least [`MIN_INTERIOR_NODES`].
    pub interior_nodes: Option<usize>,
    /// Largest relative imaginary part of `R_{i,d}` accepted from a direct
    /// interior solve before falling back to the extrapolation in `k`.
    pub interior_imag_tol: f64,
    pub extrapolation_samples: usize,
    pub extrapolation_tol: f64,
}

impl Default for FarFieldOptions {
    fn default() -> Self {
        Self {
            bem: BemOptions::default(),
            green: GreenOptions::default(),
            tail_tol: 1e-12,
            height: None,
            interior_nodes: None,
            interior_imag_tol: 1e-2,
            extrapolation_samples: 5,
            extrapolation_tol: 0.1,
        }
    }
}

/// One extracted constant with its two-height cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    /// Value from the projection onto the propagating mode.
    pub value: Complex64,
    pub heights: [f64; 2],
    /// Direct estimates at the two heights.
    pub estimates: [Complex64; 2],
    /// Largest disagreement among the projection and the two estimates.
    pub spread: f64,
    pub bound: f64,
}

/// `R_{i,d}(a_i, a_i)` with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteriorValue {
    pub value: Complex64,
    /// `|Im| / |value|` of the direct solve; the exact value is real.
    pub imag_indicator: f64,
    pub extrapolated: bool,
}

/// Extraction diagnostics stored with the coupling data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub height: f64,
    pub tail: f64,
    /// Largest two-height spread relative to its bound.
    pub worst_spread_ratio: f64,
    /// Spread of `r_i` between the two aperture edges and the centre.
    pub aperture_spread: Vec<f64>,
    pub interior: Vec<InteriorValue>,
    pub exterior_cond: f64,
    pub exterior_nodes: usize,
}

/// The coupling matrix and far-field constants at one `(delta k, theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingData {
    pub delta_k: f64,
    pub theta: f64,
    /// Row `i` holds the entries with source at aperture `i`.
    pub matrix: Vec<Vec<Complex64>>,
    pub r: Vec<Complex64>,
    pub r_del: Vec<Complex64>,
    pub r_ex: Complex64,
    pub diagnostics: Diagnostics,
}

impl CouplingData {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn matrix(&self) -> CMatrix {
        let n = self.len();
        CMatrix::from_fn(n, n, |i, j| self.matrix[i][j])
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        if self.is_empty() {
            return Vec::new();
        }
        eigenvalues(&self.matrix())
    }
}

/// Exterior solver and cached fields for one cell and wave.
#[derive(Debug)]
pub struct FarField {
    cell: UnitCell,
    wave: WaveParams,
    theta: f64,
    solver: ExteriorSolver,
    opts: FarFieldOptions,
    counts: Vec<usize>,
}

impl FarField {
    /// `cell` and `wave` in physical units; both are scaled internally.
    pub fn new(cell: &UnitCell, wave: &WaveParams, opts: FarFieldOptions) -> Result<Self, FarFieldError> {
        let scaled = cell.scaled();
        let wave_s = wave.scaled(cell.delta);
        let solver = ExteriorSolver::new(&scaled, &wave_s, opts.green, &opts.bem)?;
        let counts = if scaled.is_empty() {
            Vec::new()
        } else {
            build_mesh(&scaled, opts.bem.nodes, opts.bem.grading)?
                .resonators
                .iter()
                .map(|m| m.len())
                .collect()
        };
        Ok(Self {
            cell: scaled,
            wave: wave_s,
            theta: wave.theta,
            solver,
            opts,
            counts,
        })
    }

    /// The cell in the microscopic frame.
    pub fn cell(&self) -> &UnitCell {
        &self.cell
    }

    /// The wave in the microscopic frame.
    pub fn wave(&self) -> &WaveParams {
        &self.wave
    }

    pub fn solver(&self) -> &ExteriorSolver {
        &self.solver
    }

    fn h_max(&self) -> f64 {
        self.cell.resonators.iter().map(|r| r.h).fold(0.0, f64::max)
    }

    /// Extraction height: the larger of `3 max h + 2/s1` and the height at
    /// which the slowest evanescent mode has decayed to the tail tolerance.
    pub fn height(&self) -> f64 {
        if let Some(h) = self.opts.height {
            return h;
        }
        let s1 = self.solver.green().s1();
        let h = self.h_max();
        (3.0 * h + 2.0 / s1).max(h + (1.0 / self.opts.tail_tol).ln() / s1)
    }

    /// Relative size of the slowest evanescent mode at height `x2`.
    pub fn tail(&self, x2: f64) -> f64 {
        (-self.solver.green().s1() * (x2 - self.h_max())).exp()
    }

    fn index(&self, i: usize) -> Result<Point, FarFieldError> {
        self.cell
            .resonators
            .get(i)
            .map(|r| r.aperture_center())
            .ok_or(FarFieldError::BadIndex {
                index: i,
                len: self.cell.len(),
            })
    }

    fn k1(&self) -> f64 {
        self.solver.green().k1()
    }

    fn k2(&self) -> f64 {
        self.solver.green().k2()
    }

    fn phase(&self, a: f64, b: f64) -> Complex64 {
        Complex64::from_polar(1.0, self.k1() * a + self.k2() * b)
    }

    fn checked(
        &self,
        what: String,
        value: Complex64,
        heights: [f64; 2],
        estimates: [Complex64; 2],
        scale: f64,
    ) -> Result<Extraction, FarFieldError> {
        let spread = (estimates[0] - estimates[1])
            .norm()
            .max((estimates[0] - value).norm())
            .max((estimates[1] - value).norm());
        let scale = scale.max(value.norm());
        let tail = self.tail(heights[0]);
        let bound = 10.0 * tail * scale + 1e-9 * scale;
        if spread > bound || tail > self.opts.tail_tol * (1.0 + 1e-9) {
            return Err(FarFieldError::HeightTooSmall {
                what,
                low: heights[0],
                high: heights[1],
                spread,
                bound,
            });
        }
        Ok(Extraction {
            value,
            heights,
            estimates,
            spread,
            bound,
        })
    }

    fn heights(&self) -> [f64; 2] {
        let x = self.height();
        [x, x + 1.0]
    }

    fn density_scale(field: &ExteriorField<'_>) -> f64 {
        field.density().iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `r_i^d` from the remainder with source at aperture `i`.
    pub fn rdel(&self, i: usize) -> Result<Extraction, FarFieldError> {
        let z = self.index(i)?;
        let field = self.solver.solve(Source::Boundary(z))?;
        self.rdel_from(&field, i, z)
    }

    /// `r_i^d` for a source anywhere on the ceiling of resonator `i`.
    pub fn rdel_at(&self, i: usize, z: Point) -> Result<Extraction, FarFieldError> {
        self.index(i)?;
        let field = self.solver.solve(Source::Boundary(z))?;
        self.rdel_from(&field, i, z)
    }

    fn rdel_from(&self, field: &ExteriorField<'_>, i: usize, z: Point) -> Result<Extraction, FarFieldError> {
        let undo = Complex64::from_polar(1.0, self.k1() * z[0]);
        if self.cell.is_empty() {
            return Ok(Extraction {
                value: C0,
                heights: self.heights(),
                estimates: [C0; 2],
                spread: 0.0,
                bound: 0.0,
            });
        }
        let value = field.far_coefficient() * undo;
        let hs = self.heights();
        let mut est = [C0; 2];
        for (e, &x2) in est.iter_mut().zip(&hs) {
            *e = field.value_midpoint([z[0], x2])? * undo / self.phase(z[0], x2);
        }
        self.checked(format!("r_del[{i}]"), value, hs, est, Self::density_scale(field))
    }

    /// The remainder for a source at infinite height, `lim R+(z, x) / (exp(-i k1 z1) exp(i k2 z2))`.
    pub fn far_field(&self) -> Result<ExteriorField<'_>, FarFieldError> {
        Ok(self.solver.solve(Source::Far)?)
    }

    /// `r_i` with the probe `x` on the ceiling of resonator `i`.
    pub fn ri_at(&self, i: usize, x: Point) -> Result<Extraction, FarFieldError> {
        self.index(i)?;
        if self.cell.is_empty() {
            return Ok(Extraction {
                value: C0,
                heights: self.heights(),
                estimates: [C0; 2],
                spread: 0.0,
                bound: 0.0,
            });
        }
        let far = self.far_field()?;
        let undo = Complex64::from_polar(1.0, -self.k1() * x[0]);
        let value = far.value(x)? * undo;
        let hs = self.heights();
        let mut est = [C0; 2];
        let mut scale = Self::density_scale(&far);
        for (e, &z2) in est.iter_mut().zip(&hs) {
            let z = [x[0], z2];
            let f = self.solver.solve(Source::Exterior(z))?;
            scale = scale.max(Self::density_scale(&f));
            *e = f.value(x)? * undo / self.phase(-z[0], z2);
        }
        self.checked(format!("r[{i}]"), value, hs, est, scale)
    }

    /// `r_i` at the aperture centre.
    pub fn ri(&self, i: usize) -> Result<Extraction, FarFieldError> {
        let x = self.index(i)?;
        self.ri_at(i, x)
    }

    /// `r^ex` with the finite-height estimates taken at source abscissa `z1`.
    pub fn rex_at(&self, z1: f64) -> Result<Extraction, FarFieldError> {
        if self.cell.is_empty() {
            return Ok(Extraction {
                value: C0,
                heights: self.heights(),
                estimates: [C0; 2],
                spread: 0.0,
                bound: 0.0,
            });
        }
        let far = self.far_field()?;
        let value = far.far_coefficient();
        let hs = self.heights();
        let mut est = [C0; 2];
        for (e, &z2) in est.iter_mut().zip(&hs) {
            let f = self.solver.solve(Source::Exterior([z1, z2]))?;
            *e = f.far_coefficient() / self.phase(-z1, z2);
        }
        self.checked("r_ex".into(), value, hs, est, Self::density_scale(&far))
    }

    pub fn rex(&self) -> Result<Extraction, FarFieldError> {
        self.rex_at(0.0)
    }

    /// Node count of the interior solve for resonator `i`.
    pub fn interior_nodes(&self, i: usize) -> usize {
        self.opts
            .interior_nodes
            .unwrap_or(self.counts[i].max(MIN_INTERIOR_NODES))
    }

    /// `R_{i,d}(a_i, a_i)` from a direct interior solve, or from the
    /// extrapolation in `k` when the direct solve is not trustworthy.
    pub fn interior(&self, i: usize) -> Result<InteriorValue, FarFieldError> {
        let z = self.index(i)?;
        let r = self.cell.resonators[i];
        let count = self.interior_nodes(i);
        let k = self.wave.k;
        let wrap = |source: BemError| FarFieldError::Resonator { index: i, source };
        let solver = InteriorSolver::new(&r, count, k, &self.opts.bem).map_err(wrap)?;
        let value = solver.solve(z).and_then(|f| f.remainder_del(z)).map_err(wrap)?;
        let imag_indicator = value.im.abs() / value.norm();
        if imag_indicator <= self.opts.interior_imag_tol {
            return Ok(InteriorValue {
                value,
                imag_indicator,
                extrapolated: false,
            });
        }
        log::warn!(
            "resonator {i}: direct interior value has relative imaginary part {imag_indicator:.2e}; extrapolating in k"
        );
        let fit = extrapolate_k0(
            &r,
            count,
            z,
            &[z],
            k,
            self.opts.extrapolation_samples,
            self.opts.extrapolation_tol,
            &self.opts.bem,
        )
        .map_err(wrap)?;
        Ok(InteriorValue {
            value: fit.values[0],
            imag_indicator,
            extrapolated: true,
        })
    }

    /// Assembles the coupling matrix and all far-field constants.
    pub fn coupling(&self) -> Result<CouplingData, FarFieldError> {
        let n = self.cell.len();
        let centers: Vec<Point> = self.cell.resonators.iter().map(|r| r.aperture_center()).collect();
        let green = self.solver.green();
        let rows: Vec<(Vec<Complex64>, Extraction, Extraction, f64, InteriorValue)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let z = centers[i];
                let field = self.solver.solve(Source::Boundary(z))?;
                let mut row = vec![C0; n];
                for j in 0..n {
                    let rem = field.value(centers[j])?;
                    row[j] = if i == j {
                        2.0 * green.gamma_plus_regular(z, z)? + rem
                    } else {
                        2.0 * green.gamma_plus(z, centers[j], Method::Auto)? + rem
                    };
                }
                let interior = self.interior(i)?;
                row[i] += interior.value;
                let rdel = self.rdel_from(&field, i, z)?;
                let ri = self.ri(i)?;
                let r = &self.cell.resonators[i];
                let mut spread: f64 = 0.0;
                for x1 in [r.xi - r.eps, r.xi + r.eps] {
                    let edge = self.ri_at(i, [x1, r.h])?.value;
                    spread = spread.max((edge - ri.value).norm() / ri.value.norm().max(1e-300));
                }
                Ok((row, rdel, ri, spread, interior))
            })
            .collect::<Result<_, FarFieldError>>()?;
        let rex = self.rex()?;
        let mut worst = if rex.bound > 0.0 { rex.spread / rex.bound } else { 0.0 };
        for (_, a, b, _, _) in &rows {
            for e in [a, b] {
                if e.bound > 0.0 {
                    worst = worst.max(e.spread / e.bound);
                }
            }
        }
        let height = self.height();
        Ok(CouplingData {
            delta_k: self.wave.k,
            theta: self.theta,
            matrix: rows.iter().map(|r| r.0.clone()).collect(),
            r: rows.iter().map(|r| r.2.value).collect(),
            r_del: rows.iter().map(|r| r.1.value).collect(),
            r_ex: rex.value,
            diagnostics: Diagnostics {
                height,
                tail: self.tail(height),
                worst_spread_ratio: worst,
                aperture_spread: rows.iter().map(|r| r.3).collect(),
                interior: rows.iter().map(|r| r.4).collect(),
                exterior_cond: self.solver.cond(),
                exterior_nodes: self.solver.nodes().len(),
            },
        })
    }
}

/// Coupling data for a physical cell and wave.
pub fn assemble_coupling(cell: &UnitCell, wave: &WaveParams, opts: FarFieldOptions) -> Result<CouplingData, FarFieldError> {
    FarField::new(cell, wave, opts)?.coupling()
}

/// Orders eigenvalue samples along a sweep into continuous branches:
/// `samples[s]` holds the eigenvalues at sweep point `s`, the result
/// `branches[b][s]` the value of branch `b` there. Each step matches the
/// new values to a linear prediction of every branch, minimising the total
/// distance over all pairings (greedy beyond eight branches).
pub fn track_branches(samples: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let n = first.len();
    let mut branches: Vec<Vec<Complex64>> = first.iter().map(|&v| vec![v]).collect();
    for (s, next) in samples.iter().enumerate().skip(1) {
        let predict: Vec<Complex64> = branches
            .iter()
            .map(|b| if s >= 2 { 2.0 * b[s - 1] - b[s - 2] } else { b[s - 1] })
            .collect();
        let assign = best_assignment(&predict, next);
        for (b, &j) in assign.iter().enumerate().take(n) {
            branches[b].push(next[j]);
        }
    }
    branches
}

/// Largest ratio of a branch step to the typical local step, a sanity
/// measure for the pairing (large values flag a likely mislabelling).
pub fn worst_jump_ratio(branches: &[Vec<Complex64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for b in branches {
        let steps: Vec<f64> = b.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        for s in 1..steps.len().saturating_sub(1) {
            let local = 0.5 * (steps[s - 1] + steps[s + 1]);
            if local > 0.0 {
                worst = worst.max(steps[s] / local);
            }
        }
    }
    worst
}

fn best_assignment(predict: &[Complex64], next: &[Complex64]) -> Vec<usize> {
    let n = predict.len().min(next.len());
    let cost = |b: usize, j: usize| (predict[b] - next[j]).norm();
    if n > 8 {
        let mut used = vec![false; next.len()];
        return (0..n)
            .map(|b| {
                let j = (0..next.len())
                    .filter(|&j| !used[j])
                    .min_by(|&a, &c| cost(b, a).total_cmp(&cost(b, c)))
                    .expect("enough values");
                used[j] = true;
                j
            })
            .collect();
    }
    let mut perm: Vec<usize> = (0..next.len()).collect();
    let mut best = (f64::INFINITY, perm.clone());
    permute(&mut perm, 0, n, &mut |p| {
        let c: f64 = (0..n).map(|b| cost(b, p[b])).sum();
        if c < best.0 {
            best = (c, p.to_vec());
        }
    });
    best.1.truncate(n);
    best.1
}

fn permute(p: &mut [usize], k: usize, n: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == n {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, n, visit);
        p.swap(k, i);
    }
}

#[cfg(test)]
mod tests;
