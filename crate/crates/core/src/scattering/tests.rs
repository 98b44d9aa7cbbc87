use std::f64::consts::PI;

use super::*;
use crate::bem::{BemError, BemOptions};
use crate::geometry::Resonator;

fn reference_cell() -> UnitCell {
    UnitCell::new(
        1.0,
        vec![
            Resonator::new(0.2, 0.1, -0.43, 0.01),
            Resonator::new(0.3, 0.3, -0.19, 0.01),
            Resonator::new(0.4, 0.25, 0.11, 0.01),
            Resonator::new(0.3, 0.2, 0.38, 0.01),
        ],
    )
    .unwrap()
}

fn opts(nodes: usize) -> FarFieldOptions {
    FarFieldOptions {
        bem: BemOptions {
            nodes,
            ..Default::default()
        },
        interior_nodes: Some(200),
        ..Default::default()
    }
}

fn single() -> UnitCell {
    UnitCell::new(1.0, vec![Resonator::new(0.4, 0.25, 0.11, 0.01)]).unwrap()
}

#[test]
fn hypersingular_inverse_reproduces_the_constant() {
    for eps in [1e-3, 1e-2, 1e-1] {
        let mu = hypersingular_inverse_const(eps, Complex64::new(1.0, 0.0)).unwrap();
        for j in 0..20 {
            let t = eps * (-0.95 + 1.9 * j as f64 / 19.0);
            let v = log_operator(&mu, t);
            assert!((v - 1.0).norm() < 1e-10, "eps {eps} t {t}: {v}");
        }
    }
}

#[test]
fn hypersingular_inverse_refuses_wide_apertures() {
    for eps in [0.0, -1.0, 2.0, 3.0, f64::NAN] {
        assert!(matches!(
            hypersingular_inverse_const(eps, Complex64::new(1.0, 0.0)),
            Err(ScatterError::BadAperture(_))
        ));
    }
}

#[test]
fn log_potential_closed_form_matches_quadrature() {
    let eps = 0.05;
    let mu = ChebyshevDensity {
        eps,
        weight: Complex64::new(1.0, 0.0),
    };
    for t in [-0.03, 0.0, 0.049] {
        let v = log_operator(&mu, t).re;
        assert!((chebyshev_log_potential(eps, Complex64::new(t, 0.0)) - v).abs() < 1e-10);
        assert!((v - (eps / 2.0).ln()).abs() < 1e-10);
    }
    // off the segment, against a brute-force rule
    for zeta in [Complex64::new(0.0, 0.02), Complex64::new(0.08, -0.01), Complex64::new(-0.3, 0.2)] {
        let brute = mu.integrate(4000, |t| Complex64::new((zeta - t).norm().ln(), 0.0)).re;
        assert!((chebyshev_log_potential(eps, zeta) - brute).abs() < 1e-8, "{zeta}");
    }
}

#[test]
fn empty_cell_reflects_like_the_ground() {
    let cell = UnitCell::new(1.0, vec![]).unwrap();
    let wave = WaveParams::new(1.663, PI / 6.0, 1.3).unwrap();
    let s = Scatterer::new(&cell, &wave, opts(300)).unwrap();
    assert_eq!(s.solution().i_s, Complex64::new(-1.3, 0.0));
    for z in [[0.3, 0.0], [-2.0, 0.0]] {
        assert!(s.near_field(z).unwrap().norm() < 1e-12);
    }
    let z = [0.2, 0.7];
    assert!((s.near_field(z).unwrap() - s.far_limit(z)).norm() < 1e-12);
}

#[test]
fn reflection_is_nearly_unimodular_off_resonance() {
    // lossless walls and a single propagating order: |I_s| = I0 up to the
    // error of the asymptotic formula
    let cell = reference_cell();
    let wave = WaveParams::new(1.663, PI / 6.0, 1.0).unwrap();
    let s = Scatterer::new(&cell, &wave, opts(300)).unwrap();
    let sol = s.solution();
    assert!((sol.abs_i_s - 1.0).abs() < sol.error_budget.max(1e-3), "{sol:?}");
    assert!((s.reflection() - sol.i_s).norm() < 1e-14);
    assert!(sol.residual < 1e-12);
    assert!(sol.phase_i_s > -PI && sol.phase_i_s <= PI);
    assert_eq!(sol.eig_q.len(), 4);
}

#[test]
fn near_field_approaches_the_far_field_at_the_evanescent_rate() {
    let cell = reference_cell();
    let wave = WaveParams::new(1.663, PI / 6.0, 1.0).unwrap();
    let s = Scatterer::new(&cell, &wave, opts(300)).unwrap();
    let s1 = s.far_field().solver().green().s1();
    let zs = [1.5, 2.0, 2.5, 3.0];
    let logs: Vec<f64> = zs
        .iter()
        .map(|&z2| {
            let z = [0.1, z2];
            (s.near_field(z).unwrap() - s.far_limit(z)).norm().ln()
        })
        .collect();
    let rate = -(logs[3] - logs[0]) / (zs[3] - zs[0]);
    assert!((rate / s1 - 1.0).abs() < 0.25, "rate {rate} s1 {s1}");
}

#[test]
fn near_field_refuses_points_inside_resonators_and_below_ground() {
    let cell = single();
    let wave = WaveParams::new(1.663, PI / 6.0, 1.0).unwrap();
    let s = Scatterer::new(&cell, &wave, opts(200)).unwrap();
    assert!(matches!(s.near_field([0.11, 0.2]), Err(ScatterError::NotExterior(..))));
    assert!(matches!(s.near_field([1.11, 0.2]), Err(ScatterError::NotExterior(..))));
    assert!(matches!(s.near_field([0.5, -0.1]), Err(ScatterError::NotExterior(..))));
    assert!(matches!(s.near_field([0.11, 0.401]), Err(ScatterError::Bem(BemError::Standoff(..)))));
    assert!(s.field([0.11, 0.401]).is_none());
}

#[test]
fn near_field_is_quasi_periodic_and_solves_helmholtz() {
    let cell = single();
    let wave = WaveParams::new(1.663, PI / 3.0, 1.0).unwrap();
    let s = Scatterer::new(&cell, &wave, opts(200)).unwrap();
    let z = [-0.2, 0.6];
    let u = s.near_field(z).unwrap();
    let shifted = s.near_field([z[0] + 1.0, z[1]]).unwrap();
    let phase = Complex64::from_polar(1.0, -wave.k1());
    assert!((shifted - phase * u).norm() < 1e-10 * u.norm());
    let h = 1e-2;
    let f = |dx: f64, dy: f64| s.near_field([z[0] + dx, z[1] + dy]).unwrap();
    let lap = (-f(2.0 * h, 0.0) + 16.0 * f(h, 0.0) - 30.0 * u + 16.0 * f(-h, 0.0) - f(-2.0 * h, 0.0)
        - f(0.0, 2.0 * h)
        + 16.0 * f(0.0, h)
        - 30.0 * u
        + 16.0 * f(0.0, -h)
        - f(0.0, -2.0 * h))
        / (12.0 * h * h);
    let res = (lap + wave.k * wave.k * u).norm() / (wave.k * wave.k * u.norm());
    assert!(res < 1e-4, "{res}");
}

#[test]
fn interior_field_solves_helmholtz_and_repeats_quasi_periodically() {
    let cell = single();
    let wave = WaveParams::new(1.663, PI / 3.0, 1.0).unwrap();
    let s = Scatterer::new(&cell, &wave, opts(200)).unwrap();
    let z = [0.1, 0.2];
    let u = s.interior_field(0, z).unwrap();
    assert!(u.norm() > 0.0);
    let shifted = s.interior_field(0, [z[0] - 2.0, z[1]]).unwrap();
    let phase = Complex64::from_polar(1.0, 2.0 * wave.k1());
    assert!((shifted - phase * u).norm() < 1e-12 * u.norm());
    let h = 1e-2;
    let f = |dx: f64, dy: f64| s.interior_field(0, [z[0] + dx, z[1] + dy]).unwrap();
    let lap = (-f(2.0 * h, 0.0) + 16.0 * f(h, 0.0) - 30.0 * u + 16.0 * f(-h, 0.0) - f(-2.0 * h, 0.0)
        - f(0.0, 2.0 * h)
        + 16.0 * f(0.0, h)
        - 30.0 * u
        + 16.0 * f(0.0, -h)
        - f(0.0, -2.0 * h))
        / (12.0 * h * h);
    let res = (lap + wave.k * wave.k * u).norm() / (wave.k * wave.k * u.norm());
    assert!(res < 1e-4, "{res}");
    assert!(matches!(s.interior_field(0, [0.5, 0.2]), Err(ScatterError::NotInside(..))));
    assert!(matches!(s.interior_field(1, z), Err(ScatterError::BadIndex { .. })));
    assert!(matches!(s.interior_field(0, [0.11, 0.399]), Err(ScatterError::Bem(BemError::Standoff(..)))));
    assert_eq!(s.field(z), Some(u));
}

#[test]
fn tuning_rule_matches_the_worked_example() {
    // |D| = 0.02 at delta k = 1.663 and lambda = 0.8858
    let cell = UnitCell::new(1.0, vec![Resonator::new(0.2, 0.1, 0.0, 0.01)]).unwrap();
    let wave = WaveParams::new(1.663, PI / 2.0, 1.0).unwrap();
    let eps = tuned_apertures(&cell, &wave, 0.8858).unwrap();
    assert!((eps[0] / 2.3075567963815517e-13 - 1.0).abs() < 1e-12, "{}", eps[0]);
    let tuned = tune_apertures(&cell, &wave, 0.8858).unwrap();
    assert_eq!(tuned.resonators[0].eps, eps[0]);
    // the diagonal of Q cancels lambda at the tuning frequency
    let s = scaled(&tuned, &wave);
    let r = s.cell.resonators[0];
    let d = 1.0 / (s.dk * s.dk * r.area()) + 2.0 / PI * (r.eps / 2.0).ln();
    assert!((d + 0.8858).abs() < 1e-12);
}

#[test]
fn tuning_scales_with_the_period() {
    let cell = UnitCell::new(2.0, vec![Resonator::new(0.4, 0.2, 0.0, 0.02)]).unwrap();
    let wave = WaveParams::new(0.8, PI / 2.0, 1.0).unwrap();
    let unit = UnitCell::new(1.0, vec![Resonator::new(0.2, 0.1, 0.0, 0.01)]).unwrap();
    let wave1 = WaveParams::new(1.6, PI / 2.0, 1.0).unwrap();
    let a = tuned_apertures(&cell, &wave, 0.5).unwrap()[0];
    let b = tuned_apertures(&unit, &wave1, 0.5).unwrap()[0];
    assert!((a / (2.0 * b) - 1.0).abs() < 1e-12);
}

#[test]
fn tuning_refuses_apertures_wider_than_the_resonator() {
    let cell = UnitCell::new(1.0, vec![Resonator::new(0.3, 0.3, 0.0, 0.01)]).unwrap();
    let wave = WaveParams::new(3.0, PI / 2.0, 1.0).unwrap();
    assert!(matches!(
        tune_apertures(&cell, &wave, -3.0),
        Err(ScatterError::ApertureTooWide { index: 0, .. })
    ));
}

#[test]
fn reflection_is_invariant_under_period_doubling() {
    let cell = single();
    let doubled = cell.repeated(2).unwrap();
    let wave = WaveParams::new(1.5, PI / 3.0, 1.0).unwrap();
    let a = Scatterer::new(&cell, &wave, opts(300)).unwrap();
    let b = Scatterer::new(&doubled, &wave, opts(600)).unwrap();
    let (ia, ib) = (a.solution().i_s, b.solution().i_s);
    assert!((ia - ib).norm() < 1e-5 * ia.norm(), "{ia} {ib}");
    // each copy carries the Bloch phase of its offset
    let wa = a.solution().weights[0];
    for (r, wb) in doubled.resonators.iter().zip(&b.solution().weights) {
        let phase = Complex64::from_polar(1.0, -wave.k1() * (r.xi - cell.resonators[0].xi));
        assert!((wa * phase - wb).norm() < 1e-5 * wa.norm(), "{wa} {wb}");
    }
}

#[test]
fn resonance_search_finds_the_minimum_of_sigma_min() {
    let cell = single();
    let theta = PI / 3.0;
    let o = opts(160);
    let ks: Vec<f64> = (0..=12).map(|j| 1.2 + 0.1 * j as f64).collect();
    // a lone resonator radiates strongly, so its minimum is shallow
    let ropts = ResonanceOptions {
        threshold: 0.7,
        k_tol: 1e-4,
        ..Default::default()
    };
    let found = find_resonances(&cell, theta, &ks, o, &ropts).unwrap();
    assert_eq!(found.len(), 1, "{found:?}");
    let r = &found[0];
    for dk in [-2e-3, 2e-3] {
        let (s, _) = sweep::sigma_min_q(&cell, r.k + dk, theta, o).unwrap();
        assert!(s > r.sigma_min);
    }
    assert!(r.relative < 0.7);
    let interpolated = ResonanceOptions {
        interpolation_nodes: Some(10),
        ..ropts
    };
    let again = find_resonances(&cell, theta, &ks, o, &interpolated).unwrap();
    assert_eq!(again.len(), 1);
    assert!((again[0].k - r.k).abs() < 1e-3, "{} {}", again[0].k, r.k);
    assert!((again[0].sigma_min - r.sigma_min).abs() < 1e-4 * r.sigma_min);
}

#[test]
fn linking_follows_the_nearest_k() {
    let res = |k: f64, theta: f64| Resonance {
        k,
        theta,
        sigma_min: 0.0,
        relative: 0.0,
        eig_q: vec![],
    };
    let per_theta = vec![
        vec![res(1.0, 0.1), res(2.0, 0.1)],
        vec![res(1.0005, 0.2), res(2.3, 0.2)],
        vec![res(2.6, 0.3), res(0.9995, 0.3), res(3.5, 0.3)],
    ];
    let t = sweep::link(per_theta);
    assert_eq!(t.len(), 3);
    assert_eq!(t[0].points.len(), 3);
    assert!((t[0].spread - 0.001).abs() < 1e-12);
    assert!((t[1].spread - 0.6).abs() < 1e-12);
    assert_eq!(t[2].points.len(), 1);
}

#[test]
fn branches_are_classified_by_their_variation_in_k() {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    // one rising branch and one flat branch, listed in swapped order at the second angle
    let row = |shift: f64, swap: bool| -> Vec<Vec<Complex64>> {
        (0..5)
            .map(|j| {
                let x = j as f64;
                let mut e = vec![c(0.2 + 0.3 * x + shift, 1.5), c(0.9 + 0.001 * x, 0.01)];
                if swap {
                    e.reverse();
                }
                e
            })
            .collect()
    };
    let b = sweep::classify_branches(&[row(0.0, false), row(0.05, true), row(0.1, false)], 0.05);
    assert_eq!(b.len(), 2);
    let kinds: Vec<ResonanceKind> = b.iter().map(|x| x.kind).collect();
    assert!(kinds.contains(&ResonanceKind::Dispersive) && kinds.contains(&ResonanceKind::Stationary));
    for branch in &b {
        let flat = branch.kind == ResonanceKind::Stationary;
        for (values, v) in branch.values.iter().zip(&branch.variation) {
            assert_eq!(values.iter().all(|z| z.im < 0.1), flat);
            assert_eq!(*v <= 0.05, flat);
        }
    }
    let mixed = sweep::classify_branches(&[vec![vec![c(1.0, 0.0)], vec![c(1.2, 0.0)]], vec![vec![c(1.0, 0.0)], vec![c(1.01, 0.0)]]], 0.05);
    assert_eq!(mixed[0].kind, ResonanceKind::Mixed);
}

#[test]
fn sweep_unwraps_the_phase_along_k() {
    let cell = single();
    let ks = [1.4, 1.5, 1.6];
    let thetas = [PI / 3.0, PI / 2.0];
    let pts = sweep(&cell, &ks, &thetas, 1.0, opts(160)).unwrap();
    assert_eq!(pts.len(), 6);
    assert_eq!((pts[3].k, pts[3].theta), (1.4, PI / 2.0));
    for row in pts.chunks(3) {
        for w in row.windows(2) {
            assert!((w[1].phase_i_s - w[0].phase_i_s).abs() <= PI);
        }
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn unwrapped_phase_differs_by_multiples_of_two_pi(raw in prop::collection::vec(-PI..PI, 1..30)) {
            let u = unwrap_phase(&raw);
            for (a, b) in raw.iter().zip(&u) {
                let m = (b - a) / (2.0 * PI);
                prop_assert!((m - m.round()).abs() < 1e-9);
            }
            for w in u.windows(2) {
                prop_assert!((w[1] - w[0]).abs() <= PI + 1e-12);
            }
        }

        #[test]
        fn chebyshev_rule_integrates_even_powers(eps in 1e-4f64..1.5, p in 0usize..6) {
            // int t^{2p} / (pi sqrt(eps^2 - t^2)) dt = eps^{2p} (2p)! / (4^p p!^2)
            let mu = ChebyshevDensity { eps, weight: Complex64::new(1.0, 0.0) };
            let v = mu.integrate(8, |t| Complex64::new(t.powi(2 * p as i32), 0.0)).re;
            let mut exact = 1.0;
            for j in 1..=p {
                exact *= (2 * j - 1) as f64 / (2 * j) as f64;
            }
            exact *= eps.powi(2 * p as i32);
            prop_assert!((v - exact).abs() <= 1e-13 * exact.max(1e-300));
        }

        #[test]
        fn density_integral_is_the_weight(eps in 1e-3f64..1.9, re in -5.0f64..5.0, im in -5.0f64..5.0) {
            let v = Complex64::new(re, im);
            let mu = hypersingular_inverse_const(eps, v).unwrap();
            prop_assert!((mu.weight * (eps / 2.0).ln() - v).norm() < 1e-12 * (1.0 + v.norm()));
            prop_assert_eq!(mu.value(eps), Complex64::new(0.0, 0.0));
        }

        #[test]
        fn log_potential_is_constant_on_the_segment(eps in 1e-4f64..1.5, s in -0.999f64..0.999) {
            let v = chebyshev_log_potential(eps, Complex64::new(s * eps, 0.0));
            prop_assert!((v - (eps / 2.0).ln()).abs() < 1e-12 * (1.0 + v.abs()));
        }
    }
}
