//! Exterior remainders on the union of resonator boundaries.
//!
//! With `G(x, y) = Gamma+^(-k1)(x, y)` (the adjoint kernel) and outward
//! normals of the resonators, a remainder with source data `phi = d/dnu Gamma+(z, .)`
//! solves
//!
//! `R(x)/2 + int R(y) d/dnu_y G(x, y) = -c int G(x, y) phi(y)` on the boundary,
//! `R(x) = -int R(y) d/dnu_y G(x, y) - c int G(x, y) phi(y)` off the boundary,
//!
//! with `c = 2` for a source on an aperture and `c = 1` otherwise. Bottom
//! sides lie on the ground, where every kernel vanishes, and are omitted.

use num_complex::Complex64;

use super::{along_normal, dot, kernel_matrices, kernel_row, mat_vec, BemError, BemOptions};
use crate::geometry::{build_mesh, Node, Side, UnitCell, WaveParams};
use crate::linalg::{CMatrix, Factorized};
use crate::qpgreen::{GreenOptions, QpGreen};
use crate::{Point, C0};

/// Where the source of an exterior remainder sits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    /// On a resonator boundary (the aperture); factor 2.
    Boundary(Point),
    /// Off the boundary; factor 1.
    Exterior(Point),
    /// Infinitely high: the data is the propagating coefficient of `Gamma+`
    /// and the field is the coefficient of `exp(-i k1 z1) exp(i k2 z2)`.
    Far,
}

impl Source {
    fn factor(&self) -> f64 {
        match self {
            Source::Boundary(_) => 2.0,
            _ => 1.0,
        }
    }
}

/// Factorised exterior system for one cell and scaled wave.
#[derive(Debug, Clone)]
pub struct ExteriorSolver {
    cell: UnitCell,
    green: QpGreen,
    adjoint: QpGreen,
    nodes: Vec<Node>,
    owner: Vec<usize>,
    kmat: CMatrix,
    smat: CMatrix,
    system: Option<Factorized>,
    standoff: f64,
}

impl ExteriorSolver {
    /// `cell` and `wave` must already be in the microscopic frame.
    pub fn new(
        cell: &UnitCell,
        wave: &WaveParams,
        green_opts: GreenOptions,
        opts: &BemOptions,
    ) -> Result<Self, BemError> {
        if (cell.delta - 1.0).abs() > 1e-12 {
            return Err(BemError::Unscaled(cell.delta));
        }
        let green = QpGreen::from_wave(wave, green_opts)?;
        let adjoint = green.reversed();
        let mut nodes = Vec::new();
        let mut owner = Vec::new();
        let mut spacing: f64 = 0.0;
        if !cell.is_empty() {
            let mesh = build_mesh(cell, opts.nodes, opts.grading)?;
            for (i, n) in mesh.iter() {
                spacing = spacing.max(n.weight);
                if n.side != Side::Bottom {
                    nodes.push(*n);
                    owner.push(i);
                }
            }
        }
        let kernel = |x: Point, y: Point| adjoint.split(x, y);
        let (kmat, smat) = kernel_matrices(&kernel, &nodes)?;
        let m = nodes.len();
        let system = if m == 0 {
            None
        } else {
            let a = CMatrix::identity(m, m) * Complex64::new(0.5, 0.0) + &kmat;
            Some(Factorized::with_limit(a, opts.cond_limit)?)
        };
        Ok(Self {
            cell: cell.clone(),
            green,
            adjoint,
            nodes,
            owner,
            kmat,
            smat,
            system,
            standoff: opts.standoff_spacings * spacing,
        })
    }

    pub fn green(&self) -> &QpGreen {
        &self.green
    }

    pub fn adjoint(&self) -> &QpGreen {
        &self.adjoint
    }

    pub fn cell(&self) -> &UnitCell {
        &self.cell
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Resonator index of every node.
    pub fn owners(&self) -> &[usize] {
        &self.owner
    }

    pub fn cond(&self) -> f64 {
        self.system.as_ref().map_or(1.0, |s| s.cond())
    }

    pub fn standoff(&self) -> f64 {
        self.standoff
    }

    pub fn double_layer(&self) -> &CMatrix {
        &self.kmat
    }

    fn source_data(&self, source: Source) -> Result<Vec<Complex64>, BemError> {
        self.nodes
            .iter()
            .map(|n| {
                let g = match source {
                    Source::Far => self.green.far_coefficient(n.pos).1,
                    Source::Boundary(z) | Source::Exterior(z) => {
                        if z == n.pos {
                            return Err(BemError::SourceOnNode(z[0], z[1]));
                        }
                        // log part of the gradient plus the smooth part
                        let sp = self.green.split(z, n.pos)?;
                        let near = [n.pos[0] + sp.shift, n.pos[1]];
                        let d = [near[0] - z[0], near[1] - z[1]];
                        let c = sp.phase / (2.0 * std::f64::consts::PI * (d[0] * d[0] + d[1] * d[1]));
                        [sp.grad[0] + c * d[0], sp.grad[1] + c * d[1]]
                    }
                };
                Ok(g[0] * n.normal[0] + g[1] * n.normal[1])
            })
            .collect()
    }

    /// Solves for the remainder belonging to `source`.
    pub fn solve(&self, source: Source) -> Result<ExteriorField<'_>, BemError> {
        if let Source::Exterior(z) = source {
            self.check_standoff(z)?;
        }
        let phi = self.source_data(source)?;
        let c = source.factor();
        let rhs: Vec<Complex64> = mat_vec(&self.smat, &phi).into_iter().map(|v| -c * v).collect();
        let (density, residual) = match &self.system {
            Some(sys) => {
                let d = sys.solve(&rhs);
                let r = sys.residual(&d, &rhs);
                (d, r)
            }
            None => (Vec::new(), 0.0),
        };
        Ok(ExteriorField {
            solver: self,
            source,
            phi,
            density,
            residual,
        })
    }

    /// Position in the central period and the shift that was removed.
    fn reduce(&self, x: Point) -> (Point, f64) {
        let shift = x[0].round();
        ([x[0] - shift, x[1]], shift)
    }

    /// Checks that `x` keeps the standoff from every boundary, with a
    /// relative slack for points placed exactly at the standoff.
    fn check_standoff(&self, x: Point) -> Result<(), BemError> {
        let (xs, _) = self.reduce(x);
        if self.cell.resonator_containing(xs).is_some() {
            return Err(BemError::Standoff(x[0], x[1], self.standoff));
        }
        let d = self.cell.distance_to_boundary(xs);
        let wrap = [xs[0] - xs[0].signum(), xs[1]];
        let d = d.min(self.cell.distance_to_boundary(wrap));
        if d < (1.0 - 1e-9) * self.standoff {
            return Err(BemError::Standoff(x[0], x[1], self.standoff));
        }
        Ok(())
    }

    /// Nearest boundary point to `xs` (central period), possibly on a
    /// neighbouring copy of a resonator.
    fn nearest_boundary_point(&self, xs: Point) -> Point {
        let mut best = (f64::INFINITY, xs);
        for r in &self.cell.resonators {
            for shift in [-1.0, 0.0, 1.0] {
                let q = [xs[0] - shift, xs[1]];
                let p = r.nearest_boundary_point(q);
                let d = (q[0] - p[0]).hypot(q[1] - p[1]);
                if d < best.0 {
                    best = (d, [p[0] + shift, p[1]]);
                }
            }
        }
        best.1
    }

    fn on_boundary(&self, xs: Point) -> bool {
        self.cell
            .resonators
            .iter()
            .any(|r| r.distance_to_boundary(xs) <= 1e-12 && xs[1] > 0.0)
    }
}

/// One exterior remainder with its evaluators.
#[derive(Debug, Clone)]
pub struct ExteriorField<'a> {
    solver: &'a ExteriorSolver,
    source: Source,
    phi: Vec<Complex64>,
    density: Vec<Complex64>,
    residual: f64,
}

impl ExteriorField<'_> {
    pub fn source(&self) -> Source {
        self.source
    }

    pub fn density(&self) -> &[Complex64] {
        &self.density
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    fn direct(&self, x: Point, on: bool) -> Result<Complex64, BemError> {
        let s = self.solver;
        let kernel = |a: Point, b: Point| s.adjoint.split(a, b);
        let (kr, sr) = kernel_row(&kernel, x, &s.nodes)?;
        let v = -dot(&kr, &self.density) - self.source.factor() * dot(&sr, &self.phi);
        Ok(if on { 2.0 * v } else { v })
    }

    /// The remainder at `x`: Nyström interpolation on the boundary, the
    /// representation formula off it, and interpolation along the normal
    /// inside the standoff.
    pub fn value(&self, x: Point) -> Result<Complex64, BemError> {
        if self.density.is_empty() {
            return Ok(C0);
        }
        let s = self.solver;
        let (xs, shift) = s.reduce(x);
        if s.on_boundary(xs) {
            let p = s.nearest_boundary_point(xs);
            let phase = Complex64::from_polar(1.0, s.green().k1() * shift);
            return Ok(phase * self.direct(p, true)?);
        }
        if s.cell.resonator_containing(xs).is_some() || x[1] < 0.0 {
            return Err(BemError::OutsideDomain(x[0], x[1]));
        }
        if s.check_standoff(x).is_ok() {
            return self.direct(x, false);
        }
        let p = s.nearest_boundary_point(xs);
        let p = [p[0] + shift, p[1]];
        along_normal(x, p, s.standoff, self.direct(p, true)?, |q| {
            s.check_standoff(q)?;
            self.direct(q, false)
        })
    }

    /// The representation formula with the plain midpoint rule, the same
    /// discretisation as [`Self::far_coefficient`]; meant for points many
    /// mesh spacings away from the boundary, where it agrees with
    /// [`Self::value`] to the quadrature error.
    pub fn value_midpoint(&self, x: Point) -> Result<Complex64, BemError> {
        let s = self.solver;
        let c = self.source.factor();
        let mut acc = C0;
        for (j, n) in s.nodes.iter().enumerate() {
            let sp = s.adjoint.split(x, n.pos)?;
            let d = [n.pos[0] + sp.shift - x[0], n.pos[1] - x[1]];
            let rho2 = d[0] * d[0] + d[1] * d[1];
            let g = sp.value + sp.phase * (0.25 / std::f64::consts::PI) * rho2.ln();
            let cg = sp.phase / (2.0 * std::f64::consts::PI * rho2);
            let grad = [sp.grad[0] + cg * d[0], sp.grad[1] + cg * d[1]];
            let dn = grad[0] * n.normal[0] + grad[1] * n.normal[1];
            acc -= (self.density[j] * dn + c * g * self.phi[j]) * n.weight;
        }
        Ok(acc)
    }

    /// Coefficient `C` in `R(x) ~ C exp(i k1 x1) exp(i k2 x2)` as `x2 -> infinity`,
    /// from the propagating part of the adjoint kernel.
    pub fn far_coefficient(&self) -> Complex64 {
        let s = self.solver;
        let c = self.source.factor();
        let mut acc = C0;
        for (j, n) in s.nodes.iter().enumerate() {
            let (p, gp) = s.adjoint.far_coefficient(n.pos);
            let dn = gp[0] * n.normal[0] + gp[1] * n.normal[1];
            acc -= (self.density[j] * dn + c * p * self.phi[j]) * n.weight;
        }
        acc
    }
}
