use std::f64::consts::PI;

use num_complex::Complex64;

use super::*;
use crate::geometry::{Resonator, UnitCell, WaveParams};
use crate::qpgreen::{GreenOptions, Method};

fn lap(f: &dyn Fn(Point) -> Complex64, x: Point, h: f64) -> Complex64 {
    let mut acc = -60.0 * f(x);
    for (dx, dy) in [(1.0, 0.0), (0.0, 1.0)] {
        let at = |s: f64| f([x[0] + s * h * dx, x[1] + s * h * dy]);
        acc += 16.0 * (at(1.0) + at(-1.0)) - (at(2.0) + at(-2.0));
    }
    acc / (12.0 * h * h)
}

fn res() -> Resonator {
    Resonator::new(0.4, 0.25, 0.11, 0.01)
}

fn interior(m: usize, k: f64) -> InteriorSolver {
    InteriorSolver::new(&res(), m, k, &BemOptions::default()).unwrap()
}

#[test]
fn interior_solve_is_accurate_to_roundoff() {
    let s = interior(160, 1.663);
    let f = s.solve(res().aperture_center()).unwrap();
    assert!(f.residual() < 1e-12, "{}", f.residual());
    assert!(s.cond() < 1e3);
}

#[test]
fn interior_neumann_function_solves_helmholtz() {
    let k = 1.663;
    let s = interior(320, k);
    let f = s.solve(res().aperture_center()).unwrap();
    let n = |x: Point| f.neumann(x).unwrap();
    for probe in [[0.11, 0.2], [0.16, 0.3], [0.05, 0.1]] {
        let v = n(probe);
        let r = (lap(&n, probe, 1e-2) + k * k * v).norm() / (k * k * v.norm());
        assert!(r < 1e-4, "{probe:?}: {r:.2e}");
    }
}

#[test]
fn interior_regular_part_is_real_and_converges() {
    let z = res().aperture_center();
    let side = [res().x_max(), 0.2];
    let mut prev: Option<(Complex64, f64)> = None;
    for m in [160, 320, 640] {
        let s = interior(m, 1.663);
        let f = s.solve(z).unwrap();
        let v = f.remainder_del(z).unwrap();
        let im = v.im.abs().max(f.remainder_del(side).unwrap().im.abs());
        if let Some((pv, pim)) = prev {
            assert!(im < 0.6 * pim, "imaginary part {im:.2e} after {pim:.2e}");
            assert!((v - pv).norm() < 1e-3 * v.norm(), "{v} vs {pv}");
        }
        prev = Some((v, im));
    }
    assert!(prev.unwrap().1 < 1e-4);
}

#[test]
fn interior_small_k_limit_is_the_mean_value() {
    let k = 0.05;
    let s = interior(160, k);
    let f = s.solve(res().aperture_center()).unwrap();
    for probe in [[0.11, 0.2], [0.0, 0.15], [0.2, 0.35]] {
        let v = k * k * f.neumann(probe).unwrap();
        assert!((v - 1.0 / res().area()).norm() < 1e-3 / res().area(), "{v}");
    }
}

#[test]
fn interior_self_convergence_at_an_interior_probe() {
    let z = res().aperture_center();
    let probe = [0.11, 0.2];
    let v: Vec<Complex64> = [150, 300, 600, 1200]
        .iter()
        .map(|&m| interior(m, 1.663).solve(z).unwrap().remainder_del(probe).unwrap())
        .collect();
    let d: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    assert!(d[2] < 1e-4, "{d:?}");
    // at least first order under mesh doubling
    assert!(d[0] > 2.0 * d[1] && d[1] > 2.0 * d[2], "{d:?}");
}

#[test]
fn interior_values_near_the_wall_approach_the_trace() {
    let s = interior(320, 1.663);
    let f = s.solve(res().aperture_center()).unwrap();
    let wall = [res().x_max(), 0.2];
    let trace = f.remainder(wall).unwrap();
    let sd = s.standoff();
    let mut prev = f64::INFINITY;
    for d in [1.2 * sd, 0.5 * sd, 0.1 * sd, 1e-3 * sd] {
        let v = f.remainder([wall[0] - d, wall[1]]).unwrap();
        let gap = (v - trace).norm();
        assert!(gap < prev + 1e-12, "gap {gap:.2e} at {d:.2e}");
        prev = gap;
    }
    assert!(prev < 1e-4 * trace.norm());
    // the interpolant joins the direct formula at the standoff
    let inner = f.remainder([wall[0] - 0.999 * sd, wall[1]]).unwrap();
    let outer = f.remainder([wall[0] - 1.001 * sd, wall[1]]).unwrap();
    assert!((inner - outer).norm() < 1e-4 * outer.norm());
    assert!(matches!(f.remainder([0.5, 0.2]), Err(BemError::OutsideDomain(..))));
}

#[test]
fn boundary_traces_ignore_rounding_of_the_evaluation_point() {
    let s = interior(200, 1.663);
    let f = s.solve(res().aperture_center()).unwrap();
    for p in [[0.2, res().h], [res().x_max(), 0.2], [res().x_min(), 0.1], [0.05, 0.0]] {
        let trace = f.remainder(p).unwrap();
        for dx in [-1e-15, 1e-15] {
            for q in [[p[0] + dx, p[1]], [p[0], p[1] + dx]] {
                let v = f.remainder(q).unwrap();
                assert!((v - trace).norm() < 1e-10 * trace.norm(), "{q:?}: {v} vs {trace}");
            }
        }
    }
    let e = ext_solver(PI / 3.0, 200);
    let g = e.solve(Source::Far).unwrap();
    let p = [res().x_max(), 0.2];
    let trace = g.value(p).unwrap();
    for q in [[p[0] + 1e-15, p[1]], [p[0] - 1e-15, p[1]]] {
        assert!((g.value(q).unwrap() - trace).norm() < 1e-10 * trace.norm());
    }
    let next = g.value([p[0] + 1.0, p[1]]).unwrap();
    assert!((next - Complex64::from_polar(1.0, e.green().k1()) * trace).norm() < 1e-10 * trace.norm());
}

#[test]
fn interior_rejects_neumann_eigenvalues() {
    let k = PI / res().h;
    let err = InteriorSolver::new(&res(), 160, k, &BemOptions::default()).unwrap_err();
    assert!(matches!(err, BemError::NeumannEigenvalue { .. }));
}

#[test]
fn quadratic_fit_in_k_is_faithful_to_its_samples() {
    let r = res();
    let z = r.aperture_center();
    let probes = [z, [r.x_max(), 0.2]];
    let opts = BemOptions::default();
    // three samples interpolate exactly
    let three = extrapolate_k0(&r, 160, z, &probes, 0.0, 3, 1e-10, &opts).unwrap();
    assert!(three.residual < 1e-12);
    let top = PI / r.h;
    assert_eq!(three.sample_k, vec![0.25 * top, 0.5 * top, 0.75 * top]);
    let direct = interior(160, three.sample_k[1]);
    let field = direct.solve(z).unwrap();
    let fit = extrapolate_k0(&r, 160, z, &probes, three.sample_k[1], 3, 1e-10, &opts).unwrap();
    for (p, v) in probes.iter().zip(&fit.values) {
        assert!((field.remainder_del(*p).unwrap() - v).norm() < 1e-10);
    }
    // the k = 0 value is finite and the least-squares fit reports its residual
    let five = extrapolate_k0(&r, 160, z, &probes, 0.0, 5, 1.0, &opts).unwrap();
    assert!(five.values.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
    assert!(five.residual > 0.0 && five.residual < 0.1);
    assert!(matches!(
        extrapolate_k0(&r, 160, z, &probes, 0.0, 5, 1e-4, &opts),
        Err(BemError::FitResidual { .. })
    ));
    assert!(matches!(
        extrapolate_k0(&r, 160, z, &probes, 7.0, 5, 1.0, &opts),
        Err(BemError::BadTarget { .. })
    ));
}

fn ext_solver(theta: f64, nodes: usize) -> ExteriorSolver {
    let cell = UnitCell::new(1.0, vec![res(), Resonator::new(0.3, 0.2, -0.3, 0.01)]).unwrap();
    let wave = WaveParams::new(1.663, theta, 1.0).unwrap();
    let opts = BemOptions { nodes, ..Default::default() };
    ExteriorSolver::new(&cell, &wave, GreenOptions::default(), &opts).unwrap()
}

#[test]
fn empty_cell_has_no_remainder() {
    let cell = UnitCell::new(1.0, vec![]).unwrap();
    let wave = WaveParams::new(1.663, PI / 3.0, 1.0).unwrap();
    let s = ExteriorSolver::new(&cell, &wave, GreenOptions::default(), &BemOptions::default()).unwrap();
    let f = s.solve(Source::Exterior([0.1, 0.5])).unwrap();
    assert_eq!(f.value([0.3, 0.7]).unwrap(), Complex64::new(0.0, 0.0));
    assert_eq!(f.far_coefficient(), Complex64::new(0.0, 0.0));
}

#[test]
fn exterior_remainder_is_quasi_periodic_and_solves_helmholtz() {
    let s = ext_solver(PI / 3.0, 300);
    let f = s.solve(Source::Boundary(res().aperture_center())).unwrap();
    assert!(f.residual() < 1e-12);
    let k1 = s.green().k1();
    let k = s.green().k();
    let z = res().aperture_center();
    let val = |p: Point| f.value(p).unwrap();
    let total = |p: Point| 2.0 * s.green().gamma_plus(z, p, Method::Auto).unwrap() + val(p);
    for x in [[0.4, 0.7], [0.0, 0.9], [-0.1, 0.45]] {
        let v = val(x);
        let shifted = val([x[0] + 1.0, x[1]]);
        assert!((shifted - Complex64::from_polar(1.0, k1) * v).norm() < 1e-12 * v.norm().max(1.0));
        let n = total(x);
        let h = (lap(&total, x, 1e-2) + k * k * n).norm() / n.norm();
        assert!(h < 1e-4, "{x:?}: {h:.2e}");
    }
}

#[test]
fn exterior_far_coefficient_matches_high_values() {
    let s = ext_solver(PI / 3.0, 300);
    let (k1, k2) = (s.green().k1(), s.green().k2());
    for source in [Source::Boundary(res().aperture_center()), Source::Exterior([0.4, 0.8]), Source::Far] {
        let f = s.solve(source).unwrap();
        let c = f.far_coefficient();
        for x in [[0.3, 6.0], [-0.2, 8.0]] {
            let expect = c * Complex64::from_polar(1.0, k1 * x[0] + k2 * x[1]);
            let v = f.value(x).unwrap();
            assert!((v - expect).norm() < 1e-7 * c.norm(), "{source:?} {x:?}: {v} vs {expect}");
        }
    }
}

#[test]
fn exterior_remainder_is_reciprocal() {
    // reversing the incidence maps k1 to -k1 and swaps the arguments
    let a = ext_solver(PI / 3.0, 300);
    let b = ext_solver(2.0 * PI / 3.0, 300);
    let z = res().aperture_center();
    let w = [-0.3, 0.3];
    let forward = a.solve(Source::Boundary(z)).unwrap().value(w).unwrap();
    let backward = b.solve(Source::Boundary(w)).unwrap().value(z).unwrap();
    assert!((forward - backward).norm() < 1e-4 * forward.norm(), "{forward} vs {backward}");
}

#[test]
fn exterior_values_near_the_boundary_approach_the_trace() {
    let s = ext_solver(PI / 3.0, 300);
    let f = s.solve(Source::Far).unwrap();
    let wall = [res().x_max(), 0.2];
    let trace = f.value(wall).unwrap();
    let sd = s.standoff();
    let mut prev = f64::INFINITY;
    for d in [1.2 * sd, 0.5 * sd, 0.1 * sd, 1e-3 * sd] {
        let gap = (f.value([wall[0] + d, wall[1]]).unwrap() - trace).norm();
        assert!(gap < prev + 1e-12, "gap {gap:.2e} at {d:.2e}");
        prev = gap;
    }
    assert!(prev < 1e-4 * trace.norm());
    let inner = f.value([wall[0] + 0.999 * sd, wall[1]]).unwrap();
    let outer = f.value([wall[0] + 1.001 * sd, wall[1]]).unwrap();
    assert!((inner - outer).norm() < 1e-4 * outer.norm());
    // the same point one period over
    let far = f.value([wall[0] + 1.0 + 0.5 * sd, wall[1]]).unwrap();
    let near = f.value([wall[0] + 0.5 * sd, wall[1]]).unwrap();
    assert!((far - Complex64::from_polar(1.0, s.green().k1()) * near).norm() < 1e-12);
}

#[test]
fn exterior_refuses_sources_near_the_boundary_and_points_inside() {
    let s = ext_solver(PI / 3.0, 300);
    let f = s.solve(Source::Far).unwrap();
    assert!(matches!(f.value([0.11, 0.2]), Err(BemError::OutsideDomain(..))));
    assert!(matches!(s.solve(Source::Exterior([0.11, 0.401])), Err(BemError::Standoff(..))));
    let cell = UnitCell::new(2.0, vec![res()]).unwrap();
    let wave = WaveParams::new(1.0, PI / 3.0, 1.0).unwrap();
    assert!(matches!(
        ExteriorSolver::new(&cell, &wave, GreenOptions::default(), &BemOptions::default()),
        Err(BemError::Unscaled(_))
    ));
}
