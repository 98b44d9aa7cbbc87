//! Sweeps of `I_s` over `(k, theta)` and the resonance search on
//! `sigma_min(Q)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{assemble_q, solve_is, ScatterError};
use crate::farfield::{assemble_coupling, track_branches, CouplingData, FarFieldOptions};
use crate::geometry::{UnitCell, WaveParams};
use crate::linalg::{eigenvalues, singular_values};

/// One sample of a reflection sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: f64,
    pub theta: f64,
    pub i_s: Complex64,
    pub abs_i_s: f64,
    /// Phase of `I_s`, unwrapped along `k` at fixed `theta`.
    pub phase_i_s: f64,
    pub sigma_min: f64,
    pub error_budget: f64,
}

/// Removes `2 pi` jumps from a sequence of phases.
pub fn unwrap_phase(phases: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(phases.len());
    for &p in phases {
        match out.last() {
            None => out.push(p),
            Some(&prev) => {
                let jump = ((p - prev) / (2.0 * PI)).round();
                out.push(p - 2.0 * PI * jump);
            }
        }
    }
    out
}

/// `I_s` on the grid `ks x thetas`, ordered theta-major, with the phase
/// unwrapped along `k`. Grid points run in parallel on the current rayon pool.
pub fn sweep(
    cell: &UnitCell,
    ks: &[f64],
    thetas: &[f64],
    i0: f64,
    opts: FarFieldOptions,
) -> Result<Vec<SweepPoint>, ScatterError> {
    let grid: Vec<(f64, f64)> = thetas.iter().flat_map(|&t| ks.iter().map(move |&k| (k, t))).collect();
    let mut points = grid
        .par_iter()
        .map(|&(k, theta)| {
            let wave = WaveParams::new(k, theta, i0)?;
            let coupling = assemble_coupling(cell, &wave, opts)?;
            let s = solve_is(cell, &wave, &coupling)?;
            Ok(SweepPoint {
                k,
                theta,
                i_s: s.i_s,
                abs_i_s: s.abs_i_s,
                phase_i_s: s.phase_i_s,
                sigma_min: s.sigma_min,
                error_budget: s.error_budget,
            })
        })
        .collect::<Result<Vec<_>, ScatterError>>()?;
    for row in points.chunks_mut(ks.len().max(1)) {
        let raw: Vec<f64> = row.iter().map(|p| p.phase_i_s).collect();
        for (p, u) in row.iter_mut().zip(unwrap_phase(&raw)) {
            p.phase_i_s = u;
        }
    }
    Ok(points)
}

/// Settings of the resonance search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceOptions {
    /// A grid minimum counts when `sigma_min` is below this fraction of the
    /// median over the grid.
    pub threshold: f64,
    /// Width of the final golden-section bracket in `k`.
    pub k_tol: f64,
    /// Eigenvalue branches of `R` whose real part varies by at most this
    /// fraction across the `k` window are k-stationary.
    pub branch_tol: f64,
    /// Chebyshev samples of the coupling data per `theta`; `None` assembles
    /// the coupling at every `k`.
    pub interpolation_nodes: Option<usize>,
}

impl Default for ResonanceOptions {
    fn default() -> Self {
        Self {
            threshold: 1e-2,
            k_tol: 1e-6,
            branch_tol: 0.05,
            interpolation_nodes: None,
        }
    }
}

/// A local minimum of `sigma_min(Q)` in `k` at fixed `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub k: f64,
    pub theta: f64,
    pub sigma_min: f64,
    /// `sigma_min` over its median on the search grid.
    pub relative: f64,
    pub eig_q: Vec<Complex64>,
}

fn sigma_of(cell: &UnitCell, wave: &WaveParams, coupling: &CouplingData) -> Result<(f64, Vec<Complex64>), ScatterError> {
    let q = assemble_q(cell, wave, coupling)?;
    let s = singular_values(&q).last().copied().unwrap_or(f64::INFINITY);
    Ok((s, eigenvalues(&q)))
}

/// `sigma_min(Q)` and the eigenvalues of `Q` at one `(k, theta)`.
pub fn sigma_min_q(
    cell: &UnitCell,
    k: f64,
    theta: f64,
    opts: FarFieldOptions,
) -> Result<(f64, Vec<Complex64>), ScatterError> {
    let wave = WaveParams::new(k, theta, 1.0)?;
    sigma_of(cell, &wave, &assemble_coupling(cell, &wave, opts)?)
}

/// `sigma_min(Q)` along `k` at fixed `theta`.
struct Profile<'a> {
    cell: &'a UnitCell,
    theta: f64,
    opts: FarFieldOptions,
    interp: Option<CouplingInterpolant>,
}

impl<'a> Profile<'a> {
    fn new(
        cell: &'a UnitCell,
        theta: f64,
        ks: &[f64],
        opts: FarFieldOptions,
        ropts: &ResonanceOptions,
    ) -> Result<Self, ScatterError> {
        let interp = match ropts.interpolation_nodes {
            Some(n) if ks.len() > 1 => {
                let lo = ks.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = ks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Some(CouplingInterpolant::new(cell, theta, lo, hi, n, opts)?)
            }
            _ => None,
        };
        Ok(Self { cell, theta, opts, interp })
    }

    fn coupling(&self, k: f64) -> Result<(WaveParams, CouplingData), ScatterError> {
        let wave = WaveParams::new(k, self.theta, 1.0)?;
        let c = match &self.interp {
            Some(i) => i.at(k),
            None => assemble_coupling(self.cell, &wave, self.opts)?,
        };
        Ok((wave, c))
    }

    fn at(&self, k: f64) -> Result<(f64, Vec<Complex64>), ScatterError> {
        let (wave, c) = self.coupling(k)?;
        sigma_of(self.cell, &wave, &c)
    }

    /// `sigma_min(Q)` and the eigenvalues of `R` on the grid.
    fn samples(&self, ks: &[f64]) -> Result<(Vec<f64>, Vec<Vec<Complex64>>), ScatterError> {
        let both = ks
            .par_iter()
            .map(|&k| {
                let (wave, c) = self.coupling(k)?;
                Ok((sigma_of(self.cell, &wave, &c)?.0, c.eigenvalues()))
            })
            .collect::<Result<Vec<_>, ScatterError>>()?;
        Ok(both.into_iter().unzip())
    }

    fn check(&self) -> Result<f64, ScatterError> {
        self.interp.as_ref().map_or(Ok(0.0), |i| i.check(self.cell, self.opts))
    }

    fn refine(&self, ks: &[f64], s: &[f64], ropts: &ResonanceOptions) -> Result<Vec<Resonance>, ScatterError> {
        let (minima, med) = grid_minima(s, ropts.threshold);
        minima
            .par_iter()
            .map(|&j| {
                let (k, _) = golden(ks[j - 1], ks[j + 1], ropts.k_tol, |k| Ok(self.at(k)?.0))?;
                let (sigma, eig_q) = self.at(k)?;
                let (k, sigma, eig_q) = if sigma <= s[j] {
                    (k, sigma, eig_q)
                } else {
                    let (sj, ej) = self.at(ks[j])?;
                    (ks[j], sj, ej)
                };
                Ok(Resonance {
                    k,
                    theta: self.theta,
                    sigma_min: sigma,
                    relative: sigma / med,
                    eig_q,
                })
            })
            .collect()
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Indices of interior grid minima below `threshold * median`.
fn grid_minima(s: &[f64], threshold: f64) -> (Vec<usize>, f64) {
    let med = median(s);
    let idx = (1..s.len().saturating_sub(1))
        .filter(|&j| s[j] < s[j - 1] && s[j] <= s[j + 1] && s[j] < threshold * med)
        .collect();
    (idx, med)
}

/// Golden-section search for the minimum of `f` on `[a, b]`.
fn golden<F>(mut a: f64, mut b: f64, tol: f64, f: F) -> Result<(f64, f64), ScatterError>
where
    F: Fn(f64) -> Result<f64, ScatterError>,
{
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

/// Resonances at fixed `theta`: grid minima of `sigma_min(Q)` over `ks`
/// below the threshold, refined by golden-section search.
pub fn find_resonances(
    cell: &UnitCell,
    theta: f64,
    ks: &[f64],
    opts: FarFieldOptions,
    ropts: &ResonanceOptions,
) -> Result<Vec<Resonance>, ScatterError> {
    let profile = Profile::new(cell, theta, ks, opts, ropts)?;
    let s = ks.par_iter().map(|&k| Ok(profile.at(k)?.0)).collect::<Result<Vec<f64>, ScatterError>>()?;
    profile.refine(ks, &s, ropts)
}

/// Behaviour of an eigenvalue branch of `R` along `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResonanceKind {
    /// The real part stays put across the `k` window.
    Stationary,
    /// The real part moves with `k`.
    Dispersive,
    /// Stationary at some `theta` samples and dispersive at others.
    Mixed,
}

/// `(max Re - min Re) / mean |Re|` along a branch.
pub fn relative_variation(values: &[Complex64]) -> f64 {
    let lo = values.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().map(|z| z.re.abs()).sum::<f64>() / values.len().max(1) as f64;
    (hi - lo) / mean
}

/// One eigenvalue branch of `R`, followed along `k` and across `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenBranch {
    /// `values[t][j]` is the eigenvalue at `thetas[t]` and `ks[j]`.
    pub values: Vec<Vec<Complex64>>,
    /// [`relative_variation`] at each `theta`.
    pub variation: Vec<f64>,
    pub kind: ResonanceKind,
}

/// Minima of `sigma_min(Q)` followed across the `theta` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<Resonance>,
    /// `max k - min k` along the trajectory.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub thetas: Vec<f64>,
    pub ks: Vec<f64>,
    /// `sigma_min(Q)` on the grid, theta-major.
    pub sigma_min: Vec<Vec<f64>>,
    /// Worst relative error of the coupling interpolation; zero without it.
    pub interpolation_check: f64,
    pub branch_tol: f64,
    pub branches: Vec<EigenBranch>,
    pub trajectories: Vec<Trajectory>,
}

impl ResonanceReport {
    /// Number of eigenvalue branches of the given kind.
    pub fn count(&self, kind: ResonanceKind) -> usize {
        self.branches.iter().filter(|b| b.kind == kind).count()
    }
}

/// Links resonances at consecutive `theta` by nearest `k`.
pub(super) fn link(per_theta: Vec<Vec<Resonance>>) -> Vec<Trajectory> {
    let mut open: Vec<Vec<Resonance>> = Vec::new();
    for found in per_theta {
        let mut taken = vec![false; open.len()];
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (a, r) in found.iter().enumerate() {
            for (b, t) in open.iter().enumerate() {
                let last = t.last().expect("trajectories are non-empty");
                pairs.push(((r.k - last.k).abs(), a, b));
            }
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut used = vec![None; found.len()];
        for (_, a, b) in pairs {
            if used[a].is_none() && !taken[b] {
                used[a] = Some(b);
                taken[b] = true;
            }
        }
        for (r, slot) in found.into_iter().zip(used) {
            match slot {
                Some(b) => open[b].push(r),
                None => open.push(vec![r]),
            }
        }
    }
    open.into_iter()
        .map(|points| {
            let lo = points.iter().map(|r| r.k).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|r| r.k).fold(f64::NEG_INFINITY, f64::max);
            Trajectory { points, spread: hi - lo }
        })
        .collect()
}

/// Follows the eigenvalue branches along `k` at every `theta`, matches them
/// across `theta` at the middle of the window and classifies each one.
/// `samples[t][j]` holds the eigenvalues at `thetas[t]` and `ks[j]`.
pub(super) fn classify_branches(samples: &[Vec<Vec<Complex64>>], tol: f64) -> Vec<EigenBranch> {
    let along_k: Vec<Vec<Vec<Complex64>>> = samples.iter().map(|row| track_branches(row)).collect();
    let Some(first) = along_k.first() else {
        return Vec::new();
    };
    let mid = first.first().map_or(0, |b| b.len() / 2);
    let centres: Vec<Vec<Complex64>> = along_k.iter().map(|bs| bs.iter().map(|b| b[mid]).collect()).collect();
    let across = track_branches(&centres);
    across
        .iter()
        .map(|path| {
            let values: Vec<Vec<Complex64>> = path
                .iter()
                .zip(&along_k)
                .map(|(c, bs)| {
                    bs.iter()
                        .find(|b| b[mid] == *c)
                        .expect("centre values come from the branches")
                        .clone()
                })
                .collect();
            let variation: Vec<f64> = values.iter().map(|v| relative_variation(v)).collect();
            let still = variation.iter().filter(|&&v| v <= tol).count();
            let kind = if still == variation.len() {
                ResonanceKind::Stationary
            } else if still == 0 {
                ResonanceKind::Dispersive
            } else {
                ResonanceKind::Mixed
            };
            EigenBranch { values, variation, kind }
        })
        .collect()
}

/// Resonances on every `theta` sample linked across `theta`, together with
/// the eigenvalue branches of `R` classified as k-stationary or dispersive.
pub fn resonance_report(
    cell: &UnitCell,
    ks: &[f64],
    thetas: &[f64],
    opts: FarFieldOptions,
    ropts: &ResonanceOptions,
) -> Result<ResonanceReport, ScatterError> {
    let mut sigma = Vec::with_capacity(thetas.len());
    let mut eig_r = Vec::with_capacity(thetas.len());
    let mut per_theta = Vec::with_capacity(thetas.len());
    let mut interpolation_check: f64 = 0.0;
    for &theta in thetas {
        let profile = Profile::new(cell, theta, ks, opts, ropts)?;
        interpolation_check = interpolation_check.max(profile.check()?);
        let (s, e) = profile.samples(ks)?;
        per_theta.push(profile.refine(ks, &s, ropts)?);
        sigma.push(s);
        eig_r.push(e);
    }
    Ok(ResonanceReport {
        thetas: thetas.to_vec(),
        ks: ks.to_vec(),
        sigma_min: sigma,
        interpolation_check,
        branch_tol: ropts.branch_tol,
        branches: classify_branches(&eig_r, ropts.branch_tol),
        trajectories: link(per_theta),
    })
}

/// Barycentric interpolation in `k` of the coupling data at fixed `theta`.
///
/// The coupling data are smooth in `k` away from Neumann eigenvalues and
/// Wood anomalies. `Q` and `I_s` stay sharp through the aperture terms.
#[derive(Debug, Clone)]
pub struct CouplingInterpolant {
    theta: f64,
    ks: Vec<f64>,
    weights: Vec<f64>,
    data: Vec<CouplingData>,
}

impl CouplingInterpolant {
    /// Samples at `nodes` Chebyshev points of the second kind on `[k_lo, k_hi]`.
    pub fn new(
        cell: &UnitCell,
        theta: f64,
        k_lo: f64,
        k_hi: f64,
        nodes: usize,
        opts: FarFieldOptions,
    ) -> Result<Self, ScatterError> {
        let n = nodes.max(2) - 1;
        let ks: Vec<f64> = (0..=n)
            .map(|j| 0.5 * (k_lo + k_hi) - 0.5 * (k_hi - k_lo) * (PI * j as f64 / n as f64).cos())
            .collect();
        let weights = (0..=n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let data = ks
            .par_iter()
            .map(|&k| Ok(assemble_coupling(cell, &WaveParams::new(k, theta, 1.0)?, opts)?))
            .collect::<Result<Vec<_>, ScatterError>>()?;
        Ok(Self { theta, ks, weights, data })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn nodes(&self) -> &[f64] {
        &self.ks
    }

    /// Interpolated coupling data at `k`; diagnostics are those of the
    /// nearest node.
    pub fn at(&self, k: f64) -> CouplingData {
        let nearest = (0..self.ks.len())
            .min_by(|&a, &b| (self.ks[a] - k).abs().total_cmp(&(self.ks[b] - k).abs()))
            .expect("at least two nodes");
        if self.ks[nearest] == k {
            return self.data[nearest].clone();
        }
        let c: Vec<f64> = self.ks.iter().zip(&self.weights).map(|(x, w)| w / (k - x)).collect();
        let total: f64 = c.iter().sum();
        let mix = |f: &dyn Fn(&CouplingData) -> Complex64| -> Complex64 {
            self.data.iter().zip(&c).map(|(d, cj)| f(d) * *cj).sum::<Complex64>() / total
        };
        let base = &self.data[nearest];
        let n = base.len();
        CouplingData {
            delta_k: base.delta_k * k / self.ks[nearest],
            theta: self.theta,
            matrix: (0..n)
                .map(|i| (0..n).map(|j| mix(&|d| d.matrix[i][j])).collect())
                .collect(),
            r: (0..n).map(|i| mix(&|d| d.r[i])).collect(),
            r_del: (0..n).map(|i| mix(&|d| d.r_del[i])).collect(),
            r_ex: mix(&|d| d.r_ex),
            diagnostics: base.diagnostics.clone(),
        }
    }

    /// Largest relative deviation (Frobenius norm over all coupling data)
    /// between the interpolant and direct assembly at the midpoints of the
    /// two outermost node gaps, where the interpolation error peaks.
    pub fn check(&self, cell: &UnitCell, opts: FarFieldOptions) -> Result<f64, ScatterError> {
        let m = self.ks.len();
        let probes = [0.5 * (self.ks[0] + self.ks[1]), 0.5 * (self.ks[m - 2] + self.ks[m - 1])];
        let flat = |d: &CouplingData| -> Vec<Complex64> {
            let mut v: Vec<Complex64> = d.matrix.iter().flatten().copied().collect();
            v.extend(&d.r);
            v.extend(&d.r_del);
            v.push(d.r_ex);
            v
        };
        let mut worst: f64 = 0.0;
        for k in probes {
            let direct = assemble_coupling(cell, &WaveParams::new(k, self.theta, 1.0)?, opts)?;
            let (a, b) = (flat(&direct), flat(&self.at(k)));
            let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
            let norm: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            worst = worst.max(diff / norm.max(1e-300));
        }
        Ok(worst)
    }
}

/// Like [`sweep`], but the coupling data at each `theta` come from a
/// [`CouplingInterpolant`] with `nodes` Chebyshev samples over the `k` range.
/// Returns the samples and the worst interpolation check.
pub fn sweep_interpolated(
    cell: &UnitCell,
    ks: &[f64],
    thetas: &[f64],
    i0: f64,
    nodes: usize,
    opts: FarFieldOptions,
) -> Result<(Vec<SweepPoint>, f64), ScatterError> {
    let lo = ks.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::with_capacity(ks.len() * thetas.len());
    let mut worst: f64 = 0.0;
    for &theta in thetas {
        let interp = CouplingInterpolant::new(cell, theta, lo, hi, nodes, opts)?;
        worst = worst.max(interp.check(cell, opts)?);
        let row = ks
            .par_iter()
            .map(|&k| {
                let wave = WaveParams::new(k, theta, i0)?;
                let s = solve_is(cell, &wave, &interp.at(k))?;
                Ok(SweepPoint {
                    k,
                    theta,
                    i_s: s.i_s,
                    abs_i_s: s.abs_i_s,
                    phase_i_s: s.phase_i_s,
                    sigma_min: s.sigma_min,
                    error_budget: s.error_budget,
                })
            })
            .collect::<Result<Vec<_>, ScatterError>>()?;
        let raw: Vec<f64> = row.iter().map(|p| p.phase_i_s).collect();
        for (mut p, u) in row.into_iter().zip(unwrap_phase(&raw)) {
            p.phase_i_s = u;
            out.push(p);
        }
    }
    Ok((out, worst))
}
