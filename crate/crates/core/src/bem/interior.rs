//! Interior Neumann problem for one rectangle with the free kernel.
//!
//! For a source `z` on the boundary the remainder `R(z, .)` solves the
//! Helmholtz equation in `D` with `d/dnu R = -2 d/dnu Gamma^k(z, .)`, so that
//! `N(z, .) = 2 Gamma^k(z, .) + R(z, .)` has vanishing Neumann data away
//! from `z`. Green's identity gives, for `x` on the boundary,
//!
//! `R(x)/2 - int R(y) d/dnu_y Gamma(x, y) = 2 int Gamma(x, y) d/dnu_y Gamma(z, y)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{along_normal, dot, kernel_matrices, kernel_row, mat_vec, BemError, BemOptions};
use crate::geometry::{mesh_resonator, Node, Resonator};
use crate::linalg::{CMatrix, Factorized};
use crate::qpgreen::{free_split, gamma_free, GreenError};
use crate::{Point, C0};

/// Factorised interior system for one resonator and wavenumber.
#[derive(Debug, Clone)]
pub struct InteriorSolver {
    resonator: Resonator,
    k: f64,
    nodes: Vec<Node>,
    kmat: CMatrix,
    smat: CMatrix,
    system: Factorized,
    spacing: f64,
    standoff: f64,
}

fn check_neumann_band(r: &Resonator, k: f64, margin: f64) -> Result<(), BemError> {
    let k2 = k * k;
    let m_max = (2.0 * k * r.l / PI).ceil() as i64 + 1;
    let n_max = (2.0 * k * r.h / PI).ceil() as i64 + 1;
    for m in 0..=m_max {
        for n in 0..=n_max {
            if m == 0 && n == 0 {
                continue;
            }
            let lam = PI * PI * ((m * m) as f64 / (r.l * r.l) + (n * n) as f64 / (r.h * r.h));
            if (k2 - lam).abs() < margin * k2 {
                return Err(BemError::NeumannEigenvalue { k2, eigenvalue: lam });
            }
        }
    }
    Ok(())
}

impl InteriorSolver {
    /// Discretises `resonator` (microscopic frame) with `count` nodes.
    pub fn new(resonator: &Resonator, count: usize, k: f64, opts: &BemOptions) -> Result<Self, BemError> {
        if !(k > 0.0) {
            return Err(GreenError::BadWavenumber(k).into());
        }
        check_neumann_band(resonator, k, opts.neumann_margin)?;
        let mesh = mesh_resonator(resonator, count, opts.grading)?;
        let nodes = mesh.nodes;
        let kernel = |x: Point, y: Point| Ok(free_split(x, y, k));
        let (kmat, smat) = kernel_matrices(&kernel, &nodes)?;
        let m = nodes.len();
        let a = CMatrix::identity(m, m) * Complex64::new(0.5, 0.0) - &kmat;
        let system = Factorized::with_limit(a, opts.cond_limit)?;
        let spacing = nodes.iter().map(|n| n.weight).fold(0.0, f64::max);
        Ok(Self {
            resonator: *resonator,
            k,
            nodes,
            kmat,
            smat,
            system,
            spacing,
            standoff: opts.standoff_spacings * spacing,
        })
    }

    pub fn resonator(&self) -> &Resonator {
        &self.resonator
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn cond(&self) -> f64 {
        self.system.cond()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn standoff(&self) -> f64 {
        self.standoff
    }

    /// `d/dnu_y Gamma^k(z, y_j)` at every node.
    fn source_data(&self, z: Point) -> Result<Vec<Complex64>, BemError> {
        self.nodes
            .iter()
            .map(|n| {
                let d = [n.pos[0] - z[0], n.pos[1] - z[1]];
                let rho2 = d[0] * d[0] + d[1] * d[1];
                if rho2 == 0.0 {
                    return Err(BemError::SourceOnNode(z[0], z[1]));
                }
                let sp = free_split(z, n.pos, self.k);
                let c = 1.0 / (2.0 * PI * rho2);
                let g = [sp.grad[0] + c * d[0], sp.grad[1] + c * d[1]];
                Ok(g[0] * n.normal[0] + g[1] * n.normal[1])
            })
            .collect()
    }

    /// Solves for the remainder with source `z` on the boundary.
    pub fn solve(&self, z: Point) -> Result<InteriorField<'_>, BemError> {
        let phi = self.source_data(z)?;
        let rhs: Vec<Complex64> = mat_vec(&self.smat, &phi).into_iter().map(|v| 2.0 * v).collect();
        let density = self.system.solve(&rhs);
        let residual = self.system.residual(&density, &rhs);
        Ok(InteriorField {
            solver: self,
            source: z,
            phi,
            density,
            residual,
        })
    }

    /// The discrete double-layer matrix (weights included).
    pub fn double_layer(&self) -> &CMatrix {
        &self.kmat
    }
}

/// `R^k(z, .)` for one boundary source, with evaluators.
#[derive(Debug, Clone)]
pub struct InteriorField<'a> {
    solver: &'a InteriorSolver,
    source: Point,
    phi: Vec<Complex64>,
    density: Vec<Complex64>,
    residual: f64,
}

impl InteriorField<'_> {
    pub fn source(&self) -> Point {
        self.source
    }

    /// Values at the nodes.
    pub fn density(&self) -> &[Complex64] {
        &self.density
    }

    /// Relative residual of the discrete solve.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    fn rows(&self, x: Point) -> (Vec<Complex64>, Vec<Complex64>) {
        let k = self.solver.k;
        let kernel = |a: Point, b: Point| Ok(free_split(a, b, k));
        kernel_row(&kernel, x, &self.solver.nodes).expect("free kernel is total")
    }

    /// Nyström interpolation, valid on the boundary (`on = true`) or well inside.
    fn direct(&self, x: Point, on: bool) -> Complex64 {
        let (kr, sr) = self.rows(x);
        let v = dot(&kr, &self.density) + 2.0 * dot(&sr, &self.phi);
        if on {
            2.0 * v
        } else {
            v
        }
    }

    /// `R^k(z, x)` for `x` on the boundary or inside; points within the
    /// standoff are interpolated along the normal.
    pub fn remainder(&self, x: Point) -> Result<Complex64, BemError> {
        let r = &self.solver.resonator;
        let standoff = self.solver.standoff;
        let dist = r.distance_to_boundary(x);
        if dist <= 1e-12 * (r.l + r.h) {
            // rounding may leave x on either side; the trace needs it on the boundary
            return Ok(self.direct(r.nearest_boundary_point(x), true));
        }
        if !r.contains(x) {
            return Err(BemError::OutsideDomain(x[0], x[1]));
        }
        if dist >= standoff {
            return Ok(self.direct(x, false));
        }
        let p = r.nearest_boundary_point(x);
        along_normal(x, p, standoff, self.direct(p, true), |q| {
            if r.contains(q) && r.distance_to_boundary(q) >= (1.0 - 1e-9) * standoff {
                Ok(self.direct(q, false))
            } else {
                Err(BemError::Standoff(x[0], x[1], standoff))
            }
        })
    }

    /// `R_{i,d}(z, x) = R^k(z, x) - 1/(k^2 |D|) + 2 (Gamma^k(z, x) - log|z - x| / 2pi)`
    /// for `x` on the boundary (including `x = z`) or inside.
    pub fn remainder_del(&self, x: Point) -> Result<Complex64, BemError> {
        let k = self.solver.k;
        let area = self.solver.resonator.area();
        Ok(self.remainder(x)? - 1.0 / (k * k * area) + 2.0 * free_split(self.source, x, k).value)
    }

    /// `N(z, x) = 2 Gamma^k(z, x) + R^k(z, x)`, `x != z`.
    pub fn neumann(&self, x: Point) -> Result<Complex64, BemError> {
        let g = gamma_free(self.source, x, self.solver.k)?;
        Ok(2.0 * g + self.remainder(x)?)
    }
}

/// Values of `R_{i,d}(z, x)` at probe points obtained by a least-squares
/// quadratic fit in `k` over the well-conditioned window.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolated {
    pub values: Vec<Complex64>,
    pub sample_k: Vec<f64>,
    /// Largest relative fit residual over the probes.
    pub residual: f64,
}

/// Extrapolates `R_{i,d}(z, x)` to `target` (possibly 0) from `samples`
/// direct solves with `k` uniform in `[0.25, 0.75] min(pi/l, pi/h)`.
pub fn extrapolate_k0(
    resonator: &Resonator,
    count: usize,
    z: Point,
    probes: &[Point],
    target: f64,
    samples: usize,
    tol: f64,
    opts: &BemOptions,
) -> Result<Extrapolated, BemError> {
    let top = (PI / resonator.l).min(PI / resonator.h);
    let (lo, hi) = (0.25 * top, 0.75 * top);
    if !(target >= 0.0 && target < hi) {
        return Err(BemError::BadTarget { target, upper: hi });
    }
    let samples = samples.max(3);
    let ks: Vec<f64> = (0..samples)
        .map(|j| lo + (hi - lo) * j as f64 / (samples - 1) as f64)
        .collect();
    let mut data = vec![vec![C0; ks.len()]; probes.len()];
    for (j, &k) in ks.iter().enumerate() {
        let solver = InteriorSolver::new(resonator, count, k, opts)?;
        let field = solver.solve(z)?;
        for (p, x) in probes.iter().enumerate() {
            data[p][j] = field.remainder_del(*x)?;
        }
    }
    // normal equations for c0 + c1 k + c2 k^2, on a centred variable
    let mid = 0.5 * (lo + hi);
    let scale = 0.5 * (hi - lo);
    let basis = |k: f64| {
        let u = (k - mid) / scale;
        [1.0, u, u * u]
    };
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    for &k in &ks {
        let b = basis(k);
        for r in 0..3 {
            for c in 0..3 {
                ata[(r, c)] += b[r] * b[c];
            }
        }
    }
    let inv = ata.try_inverse().expect("three distinct sample points");
    let mut values = Vec::with_capacity(probes.len());
    let mut worst: f64 = 0.0;
    for row in &data {
        let mut atb = [C0; 3];
        for (j, &k) in ks.iter().enumerate() {
            let b = basis(k);
            for r in 0..3 {
                atb[r] += row[j] * b[r];
            }
        }
        let mut coef = [C0; 3];
        for r in 0..3 {
            for c in 0..3 {
                coef[r] += atb[c] * inv[(r, c)];
            }
        }
        let eval = |k: f64| {
            let b = basis(k);
            coef[0] * b[0] + coef[1] * b[1] + coef[2] * b[2]
        };
        let size = row.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        for (j, &k) in ks.iter().enumerate() {
            worst = worst.max((eval(k) - row[j]).norm() / size);
        }
        values.push(eval(target));
    }
    if worst > tol {
        return Err(BemError::FitResidual { residual: worst, tol });
    }
    Ok(Extrapolated {
        values,
        sample_k: ks,
        residual: worst,
    })
}
