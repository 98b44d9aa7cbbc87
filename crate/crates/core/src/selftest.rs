//! Built-in consistency suites: Helmholtz residuals of the reconstructed
//! Neumann functions and the period-doubling relations.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bem::{BemOptions, ExteriorSolver, InteriorSolver, Source};
use crate::farfield::{assemble_coupling, FarFieldOptions};
use crate::geometry::{Resonator, UnitCell, WaveParams};
use crate::qpgreen::{GreenOptions, Method};
use crate::scattering::{ScatterError, Scatterer};
use crate::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCheck {
    pub suite: String,
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl SelfCheck {
    fn below(suite: &str, name: String, value: f64, limit: f64) -> Self {
        Self {
            suite: suite.into(),
            name,
            value,
            limit,
            passed: value < limit,
        }
    }
}

/// Fourth-order five-point Laplacian with step `h`.
pub fn laplacian(f: &dyn Fn(Point) -> Complex64, x: Point, h: f64) -> Complex64 {
    let mut acc = -60.0 * f(x);
    for (dx, dy) in [(1.0, 0.0), (0.0, 1.0)] {
        let at = |s: f64| f([x[0] + s * h * dx, x[1] + s * h * dy]);
        acc += 16.0 * (at(1.0) + at(-1.0)) - (at(2.0) + at(-2.0));
    }
    acc / (12.0 * h * h)
}

/// `|Lap F + k^2 F| / (k^2 |F|)` at `x`.
pub fn helmholtz_residual(f: &dyn Fn(Point) -> Complex64, x: Point, k: f64) -> f64 {
    let v = f(x);
    (laplacian(f, x, 1e-2) + k * k * v).norm() / (k * k * v.norm())
}

/// The two-resonator test cell in the microscopic frame.
pub fn test_cell() -> UnitCell {
    UnitCell::new(
        1.0,
        vec![Resonator::new(0.4, 0.25, 0.11, 0.01), Resonator::new(0.3, 0.2, -0.3, 0.01)],
    )
    .expect("valid test cell")
}

pub const EXTERIOR_PROBES: [Point; 3] = [[0.4, 0.7], [0.0, 0.9], [-0.1, 0.45]];
pub const INTERIOR_PROBES: [Point; 2] = [[0.11, 0.2], [0.03, 0.3]];

/// Largest Helmholtz residual of `N_{+,d}`, `N_+` and `N_{i,d}` at the probes,
/// for `nodes` boundary nodes per cell.
pub fn helmholtz_residuals(nodes: usize) -> Result<[f64; 3], ScatterError> {
    let cell = test_cell();
    let wave = WaveParams::new(1.663, PI / 3.0, 1.0)?;
    let bem = BemOptions {
        nodes,
        ..Default::default()
    };
    let solver = ExteriorSolver::new(&cell, &wave, GreenOptions::default(), &bem)?;
    let green = solver.green();
    let k = wave.k;
    let a = cell.resonators[0].aperture_center();
    let boundary = solver.solve(Source::Boundary(a))?;
    let n_bd = |x: Point| 2.0 * green.gamma_plus(a, x, Method::Auto).unwrap() + boundary.value(x).unwrap();
    let z = [0.35, 0.8];
    let exterior = solver.solve(Source::Exterior(z))?;
    let n_ext = |x: Point| green.gamma_plus(z, x, Method::Auto).unwrap() + exterior.value(x).unwrap();
    let mut out = [0.0f64; 3];
    for x in EXTERIOR_PROBES {
        out[0] = out[0].max(helmholtz_residual(&n_bd, x, k));
        if (x[0] - z[0]).hypot(x[1] - z[1]) > 0.1 {
            out[1] = out[1].max(helmholtz_residual(&n_ext, x, k));
        }
    }
    let inner = InteriorSolver::new(&cell.resonators[0], nodes, k, &bem)?;
    let field = inner.solve(a)?;
    let n_in = |x: Point| field.neumann(x).unwrap();
    for x in INTERIOR_PROBES {
        out[2] = out[2].max(helmholtz_residual(&n_in, x, k));
    }
    Ok(out)
}

/// Helmholtz residuals at `nodes` and `2 nodes`: below `1e-3` and decreasing.
pub fn helmholtz_suite(nodes: usize) -> Result<Vec<SelfCheck>, ScatterError> {
    let coarse = helmholtz_residuals(nodes)?;
    let fine = helmholtz_residuals(2 * nodes)?;
    let names = ["N_+,d", "N_+", "N_i,d"];
    let mut out = Vec::new();
    for i in 0..3 {
        out.push(SelfCheck::below("helmholtz", format!("{} residual (M = {nodes})", names[i]), coarse[i], 1e-3));
        out.push(SelfCheck::below(
            "helmholtz",
            format!("{} residual (M = {}) below M = {nodes}", names[i], 2 * nodes),
            fine[i],
            coarse[i],
        ));
    }
    Ok(out)
}

/// Relative deviations in the period-doubling relations between a single
/// resonator in a cell of period 1 (`nodes` nodes) and the same resonator
/// duplicated in a cell of period 2 (`2 nodes` nodes).
pub fn period_doubling(nodes: usize) -> Result<Vec<(String, f64)>, ScatterError> {
    let single = UnitCell::new(1.0, vec![Resonator::new(0.4, 0.25, 0.11, 0.01)])?;
    let doubled = single.repeated(2)?;
    let wave = WaveParams::new(1.5, PI / 3.0, 1.0)?;
    let opts = |n: usize| FarFieldOptions {
        bem: BemOptions {
            nodes: n,
            ..Default::default()
        },
        interior_nodes: Some(nodes.max(200)),
        ..Default::default()
    };
    let a = assemble_coupling(&single, &wave, opts(nodes))?;
    let b = assemble_coupling(&doubled, &wave, opts(2 * nodes))?;
    let ph = Complex64::from_polar(1.0, wave.k1());
    let shift = 2.0 / PI * 2f64.ln();
    let rel = |x: Complex64, y: Complex64| (x - y).norm() / y.norm();
    let mut out = vec![
        ("R_11 + exp(-i k1) R_12".to_string(), rel(b.matrix[0][0] + ph.conj() * b.matrix[0][1] - shift, a.matrix[0][0])),
        ("R_22 + exp(i k1) R_21".to_string(), rel(b.matrix[1][1] + ph * b.matrix[1][0] - shift, a.matrix[0][0])),
    ];
    for i in 0..2 {
        out.push((format!("r_{}", i + 1), rel(2.0 * b.r[i], a.r[0])));
        out.push((format!("r_{},d", i + 1), rel(2.0 * b.r_del[i], a.r_del[0])));
    }
    out.push(("r_ex".into(), rel(2.0 * b.r_ex, a.r_ex)));
    let sa = crate::scattering::solve_is(&single, &wave, &a)?;
    let sb = crate::scattering::solve_is(&doubled, &wave, &b)?;
    out.push(("I_s".into(), rel(sb.i_s, sa.i_s)));
    Ok(out)
}

pub fn period_doubling_suite(nodes: usize) -> Result<Vec<SelfCheck>, ScatterError> {
    Ok(period_doubling(nodes)?
        .into_iter()
        .map(|(name, v)| SelfCheck::below("period-doubling", name, v, 1e-5))
        .collect())
}

/// Residual of the near field against the far-field limit at two heights;
/// checks the exponential decay of the evanescent remainder.
pub fn far_field_suite(nodes: usize) -> Result<Vec<SelfCheck>, ScatterError> {
    let cell = test_cell();
    let wave = WaveParams::new(1.663, PI / 3.0, 1.0)?;
    let opts = FarFieldOptions {
        bem: BemOptions {
            nodes,
            ..Default::default()
        },
        ..Default::default()
    };
    let s = Scatterer::new(&cell, &wave, opts)?;
    let s1 = s.far_field().solver().green().s1();
    let d = |z2: f64| -> Result<f64, ScatterError> {
        let z = [0.1, z2];
        Ok((s.near_field(z)? - s.far_limit(z)).norm())
    };
    let rate = (d(1.5)? / d(3.0)?).ln() / 1.5;
    Ok(vec![SelfCheck::below(
        "far-field",
        "decay rate of U - U0 - I_s exp(-i k1 z1 + i k2 z2) relative to s_1".into(),
        (rate / s1 - 1.0).abs(),
        0.25,
    )])
}
