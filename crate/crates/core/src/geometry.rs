//! Unit-cell geometry, incident wave and boundary discretisation.
//!
//! Lengths in [`UnitCell`] and wavenumbers in [`WaveParams`] are physical.
//! The solvers work in the microscopic frame where the period is 1: lengths
//! are divided by `delta` and the wavenumber multiplied by it, see
//! [`UnitCell::scaled`] and [`WaveParams::scaled`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Point;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("period delta must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("resonator {index}: {field} must be positive and finite, got {value}")]
    NonPositive {
        index: usize,
        field: &'static str,
        value: f64,
    },
    #[error("resonator {index}: aperture half-length {eps} must be below l/2 = {half_width}")]
    ApertureTooWide {
        index: usize,
        eps: f64,
        half_width: f64,
    },
    #[error("resonator {index} leaves the unit strip: xi = {xi}, l = {l}, delta = {delta}")]
    OutsideStrip {
        index: usize,
        xi: f64,
        l: f64,
        delta: f64,
    },
    #[error("resonators {0} and {1} overlap or touch")]
    Overlap(usize, usize),
    #[error("wavenumber must be positive and finite, got {0}")]
    BadWavenumber(f64),
    #[error("incidence angle must lie in (0, pi), got {0}")]
    BadAngle(f64),
    #[error("mesh needs at least {needed} nodes for this cell, got {got}")]
    TooFewNodes { needed: usize, got: usize },
}

/// Rectangular resonator `(xi - l/2, xi + l/2) x (0, h)` with an aperture of
/// half-length `eps` centred on its ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonator {
    pub h: f64,
    pub l: f64,
    pub xi: f64,
    pub eps: f64,
}

impl Resonator {
    pub fn new(h: f64, l: f64, xi: f64, eps: f64) -> Self {
        Self { h, l, xi, eps }
    }

    pub fn area(&self) -> f64 {
        self.l * self.h
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.l + self.h)
    }

    /// Centre of the aperture, `(xi, h)`.
    pub fn aperture_center(&self) -> Point {
        [self.xi, self.h]
    }

    pub fn center(&self) -> Point {
        [self.xi, 0.5 * self.h]
    }

    pub fn x_min(&self) -> f64 {
        self.xi - 0.5 * self.l
    }

    pub fn x_max(&self) -> f64 {
        self.xi + 0.5 * self.l
    }

    /// Strict interior test.
    pub fn contains(&self, p: Point) -> bool {
        p[0] > self.x_min() && p[0] < self.x_max() && p[1] > 0.0 && p[1] < self.h
    }

    /// Euclidean distance from `p` to the rectangle boundary.
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        let (x0, x1, y1) = (self.x_min(), self.x_max(), self.h);
        if self.contains(p) {
            (p[0] - x0).min(x1 - p[0]).min(p[1]).min(y1 - p[1])
        } else {
            let dx = (x0 - p[0]).max(0.0).max(p[0] - x1);
            let dy = (-p[1]).max(0.0).max(p[1] - y1);
            dx.hypot(dy)
        }
    }

    /// Closest point of the rectangle boundary to `p`.
    pub fn nearest_boundary_point(&self, p: Point) -> Point {
        let (x0, x1, y1) = (self.x_min(), self.x_max(), self.h);
        if self.contains(p) {
            let cands = [
                (p[0] - x0, [x0, p[1]]),
                (x1 - p[0], [x1, p[1]]),
                (p[1], [p[0], 0.0]),
                (y1 - p[1], [p[0], y1]),
            ];
            cands
                .into_iter()
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|c| c.1)
                .expect("four candidates")
        } else {
            [p[0].clamp(x0, x1), p[1].clamp(0.0, y1)]
        }
    }

    fn scaled(&self, delta: f64) -> Self {
        Self {
            h: self.h / delta,
            l: self.l / delta,
            xi: self.xi / delta,
            eps: self.eps / delta,
        }
    }
}

/// One period of the metasurface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitCell {
    pub delta: f64,
    pub resonators: Vec<Resonator>,
}

impl UnitCell {
    /// Builds a cell after structural checks (positivity, aperture inside the
    /// ceiling, resonators inside the strip and pairwise disjoint).
    pub fn new(delta: f64, resonators: Vec<Resonator>) -> Result<Self, GeometryError> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(GeometryError::BadPeriod(delta));
        }
        for (i, r) in resonators.iter().enumerate() {
            let index = i + 1;
            for (field, value) in [("h", r.h), ("l", r.l), ("eps", r.eps)] {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(GeometryError::NonPositive {
                        index,
                        field,
                        value,
                    });
                }
            }
            if !r.xi.is_finite() {
                return Err(GeometryError::NonPositive {
                    index,
                    field: "xi",
                    value: r.xi,
                });
            }
            if r.eps >= 0.5 * r.l {
                return Err(GeometryError::ApertureTooWide {
                    index,
                    eps: r.eps,
                    half_width: 0.5 * r.l,
                });
            }
            let half = 0.5 * delta - 0.5 * r.l;
            if !(r.xi > -half && r.xi < half) {
                return Err(GeometryError::OutsideStrip {
                    index,
                    xi: r.xi,
                    l: r.l,
                    delta,
                });
            }
        }
        for i in 0..resonators.len() {
            for j in i + 1..resonators.len() {
                let (a, b) = (&resonators[i], &resonators[j]);
                // both rectangles rest on the ground, so closures are disjoint
                // exactly when the x-intervals are
                if a.x_max() >= b.x_min() && b.x_max() >= a.x_min() {
                    return Err(GeometryError::Overlap(i + 1, j + 1));
                }
            }
        }
        Ok(Self { delta, resonators })
    }

    /// The same cell in the microscopic frame (period 1).
    pub fn scaled(&self) -> UnitCell {
        UnitCell {
            delta: 1.0,
            resonators: self.resonators.iter().map(|r| r.scaled(self.delta)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.resonators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resonators.is_empty()
    }

    /// Distance from `p` to the nearest resonator boundary (infinite if none).
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        self.resonators
            .iter()
            .map(|r| r.distance_to_boundary(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the resonator whose interior contains `p`.
    pub fn resonator_containing(&self, p: Point) -> Option<usize> {
        self.resonators.iter().position(|r| r.contains(p))
    }

    /// The cell repeated `copies` times side by side, giving a cell of
    /// period `copies * delta` with the same physical geometry.
    pub fn repeated(&self, copies: usize) -> Result<UnitCell, GeometryError> {
        let n = copies as f64;
        let mut out = Vec::with_capacity(self.len() * copies);
        for c in 0..copies {
            let shift = (c as f64 - 0.5 * (n - 1.0)) * self.delta;
            for r in &self.resonators {
                out.push(Resonator {
                    xi: r.xi + shift,
                    ..*r
                });
            }
        }
        UnitCell::new(n * self.delta, out)
    }
}

/// Incident plane wave `U0(x) = I0 exp(-i k1 x1) exp(-i k2 x2)` with
/// `(k1, k2) = -k (cos theta, sin theta)`, so that fields are quasi-periodic
/// with factor `exp(-i k1 delta)` per period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    pub k: f64,
    pub theta: f64,
    pub i0: f64,
}

impl WaveParams {
    pub fn new(k: f64, theta: f64, i0: f64) -> Result<Self, GeometryError> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(GeometryError::BadWavenumber(k));
        }
        if !(theta > 0.0 && theta < PI) {
            return Err(GeometryError::BadAngle(theta));
        }
        Ok(Self { k, theta, i0 })
    }

    pub fn k1(&self) -> f64 {
        -self.k * self.theta.cos()
    }

    pub fn k2(&self) -> f64 {
        -self.k * self.theta.sin()
    }

    /// Wave in the microscopic frame of a cell with period `delta`.
    pub fn scaled(&self, delta: f64) -> WaveParams {
        WaveParams {
            k: self.k * delta,
            ..*self
        }
    }
}

/// Tolerance bands used by [`validate_assumptions`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    /// Relative distance required between `(delta k)^2` and every Neumann eigenvalue.
    pub neumann_margin: f64,
    /// Relative distance required between `delta k` and every `|2 pi n - delta k1|`.
    pub wood_band: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            neumann_margin: 1e-3,
            wood_band: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub condition: String,
    pub passed: bool,
    /// Signed slack of the inequality; negative means violated.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Reports the standing assumptions of the asymptotic theory.
///
/// The inequalities are evaluated in the microscopic frame. A check passes
/// only with strictly positive margin.
pub fn validate_assumptions(
    cell: &UnitCell,
    wave: &WaveParams,
    opts: &ValidationOptions,
) -> ValidationReport {
    let wave = wave.scaled(cell.delta);
    let cell = cell.scaled();
    let k = wave.k;
    let k1 = wave.k1();
    let mut checks = Vec::new();

    let low_freq = cell
        .resonators
        .iter()
        .map(|r| (PI / r.l).min(PI / r.h) - k)
        .fold(f64::INFINITY, f64::min);
    checks.push(Check {
        name: "a".into(),
        condition: "delta k < min(pi/l_i, pi/h_i)".into(),
        passed: low_freq > 0.0,
        margin: low_freq,
    });

    let single_mode = 2.0 * PI - k1.abs() - k;
    checks.push(Check {
        name: "b".into(),
        condition: "delta k < 2 pi - |delta k1|".into(),
        passed: single_mode > 0.0,
        margin: single_mode,
    });

    let k_sq = k * k;
    let mut neumann = f64::INFINITY;
    for r in &cell.resonators {
        let m_max = ((2.0 * k * r.l / PI).ceil() as i64).max(1) + 1;
        let n_max = ((2.0 * k * r.h / PI).ceil() as i64).max(1) + 1;
        for m in 0..=m_max {
            for n in 0..=n_max {
                if m == 0 && n == 0 {
                    continue;
                }
                let lam = PI * PI * ((m * m) as f64 / (r.l * r.l) + (n * n) as f64 / (r.h * r.h));
                neumann = neumann.min((k_sq - lam).abs() / k_sq - opts.neumann_margin);
            }
        }
    }
    checks.push(Check {
        name: "c".into(),
        condition: "(delta k)^2 away from the Neumann eigenvalues of every D_i".into(),
        passed: cell.is_empty() || neumann > 0.0,
        margin: neumann,
    });

    let n_reach = (k.abs() / (2.0 * PI)).ceil() as i64 + 2;
    let mut inf_dist = f64::INFINITY;
    let mut wood = f64::INFINITY;
    for n in -n_reach..=n_reach {
        let d = (2.0 * PI * n as f64 - k1).abs();
        if n != 0 {
            inf_dist = inf_dist.min(d);
        }
        wood = wood.min((k - d).abs() / k - opts.wood_band);
    }
    checks.push(Check {
        name: "d".into(),
        condition: "k^2 < inf_{n != 0} |2 pi n - k1|^2 (scaled)".into(),
        passed: k < inf_dist,
        margin: inf_dist - k,
    });
    checks.push(Check {
        name: "wood".into(),
        condition: "delta k outside the Wood-anomaly bands |k - |2 pi n - k1|| < band k".into(),
        passed: wood > 0.0,
        margin: wood,
    });

    ValidationReport { checks }
}

/// Distribution of panels along one side of a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Grading {
    /// Equal panels.
    #[default]
    Uniform,
    /// Panels refined towards both corners by the map
    /// `s -> s^p / (s^p + (1 - s)^p)` with the given exponent `p >= 1`.
    Sigmoidal(f64),
}

impl Grading {
    fn map(&self, s: f64) -> f64 {
        match *self {
            Grading::Uniform => s,
            Grading::Sigmoidal(p) => {
                let a = s.powf(p);
                let b = (1.0 - s).powf(p);
                a / (a + b)
            }
        }
    }
}

/// Sides of a rectangle, traversed counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

/// One Nyström node: the midpoint of a boundary panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub pos: Point,
    pub normal: Point,
    pub weight: f64,
    pub side: Side,
    /// Panel end points in counter-clockwise order.
    pub panel: [Point; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorMesh {
    pub nodes: Vec<Node>,
}

impl ResonatorMesh {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMesh {
    pub resonators: Vec<ResonatorMesh>,
}

impl BoundaryMesh {
    pub fn total_nodes(&self) -> usize {
        self.resonators.iter().map(|r| r.len()).sum()
    }

    /// All nodes tagged with their resonator index.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Node)> {
        self.resonators
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.nodes.iter().map(move |n| (i, n)))
    }
}

/// Splits `total` into integer parts proportional to `lengths` (largest remainder).
fn apportion(total: usize, lengths: &[f64]) -> Vec<usize> {
    let sum: f64 = lengths.iter().sum();
    let exact: Vec<f64> = lengths.iter().map(|l| total as f64 * l / sum).collect();
    let mut parts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total - parts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        parts[i] += 1;
        left -= 1;
    }
    parts
}

/// Discretises one rectangle with `count` panel-midpoint nodes.
pub fn mesh_resonator(
    r: &Resonator,
    count: usize,
    grading: Grading,
) -> Result<ResonatorMesh, GeometryError> {
    if count < 8 {
        return Err(GeometryError::TooFewNodes {
            needed: 8,
            got: count,
        });
    }
    let (x0, x1, h) = (r.x_min(), r.x_max(), r.h);
    let lengths = [r.l, r.h, r.l, r.h];
    let mut per_side = apportion(count, &lengths);
    // an even ceiling count puts a panel boundary at the aperture centre
    if per_side[2] % 2 == 1 {
        per_side[2] += 1;
        per_side[0] -= 1;
    }
    if let Some(&few) = per_side.iter().min() {
        if few < 2 {
            return Err(GeometryError::TooFewNodes {
                needed: count + 2 * (2 - few),
                got: count,
            });
        }
    }
    let sides = [
        (Side::Bottom, [x0, 0.0], [x1, 0.0], [0.0, -1.0]),
        (Side::Right, [x1, 0.0], [x1, h], [1.0, 0.0]),
        (Side::Top, [x1, h], [x0, h], [0.0, 1.0]),
        (Side::Left, [x0, h], [x0, 0.0], [-1.0, 0.0]),
    ];
    let mut nodes = Vec::with_capacity(count);
    for ((side, a, b, normal), &n) in sides.into_iter().zip(&per_side) {
        let at = |s: f64| -> Point {
            let t = grading.map(s);
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
        };
        for j in 0..n {
            let p = at(j as f64 / n as f64);
            let q = at((j + 1) as f64 / n as f64);
            let w = (q[0] - p[0]).hypot(q[1] - p[1]);
            nodes.push(Node {
                pos: [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])],
                normal,
                weight: w,
                side,
                panel: [p, q],
            });
        }
    }
    Ok(ResonatorMesh { nodes })
}

/// Discretises every resonator, distributing `nodes_per_cell` in proportion
/// to the perimeters.
pub fn build_mesh(
    cell: &UnitCell,
    nodes_per_cell: usize,
    grading: Grading,
) -> Result<BoundaryMesh, GeometryError> {
    let needed = 8 * cell.len();
    if nodes_per_cell < needed {
        return Err(GeometryError::TooFewNodes {
            needed,
            got: nodes_per_cell,
        });
    }
    let perims: Vec<f64> = cell.resonators.iter().map(|r| r.perimeter()).collect();
    let counts = if cell.is_empty() {
        Vec::new()
    } else {
        apportion(nodes_per_cell, &perims)
    };
    let resonators = cell
        .resonators
        .iter()
        .zip(counts)
        .map(|(r, c)| mesh_resonator(r, c, grading))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BoundaryMesh { resonators })
}
