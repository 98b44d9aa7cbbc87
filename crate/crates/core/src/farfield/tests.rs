use std::f64::consts::PI;

use super::*;
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

fn single() -> UnitCell {
    UnitCell::new(1.0, vec![Resonator::new(0.4, 0.25, 0.11, 0.01)]).unwrap()
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

#[test]
fn empty_cell_has_vanishing_constants() {
    let cell = UnitCell::new(1.0, vec![]).unwrap();
    let wave = WaveParams::new(1.663, PI / 3.0, 1.0).unwrap();
    let ff = FarField::new(&cell, &wave, FarFieldOptions::default()).unwrap();
    assert_eq!(ff.rex().unwrap().value, C0);
    assert!(matches!(ff.rdel(0), Err(FarFieldError::BadIndex { .. })));
    let c = ff.coupling().unwrap();
    assert!(c.is_empty() && c.eigenvalues().is_empty());
    assert_eq!(c.r_ex, C0);
}

#[test]
fn single_resonator_gives_a_scalar() {
    let wave = WaveParams::new(1.663, PI / 3.0, 1.0).unwrap();
    let c = assemble_coupling(&single(), &wave, opts(150)).unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!(c.matrix().shape(), (1, 1));
    assert!(c.diagnostics.worst_spread_ratio < 1.0);
    assert!(c.matrix[0][0].re.is_finite() && c.matrix[0][0].im.is_finite());
}

#[test]
fn extractions_agree_between_heights() {
    let wave = WaveParams::new(1.663, PI / 6.0, 1.0).unwrap();
    let base = FarField::new(&reference_cell(), &wave, FarFieldOptions::default()).unwrap();
    let x = base.height();
    let higher = FarField::new(
        &reference_cell(),
        &wave,
        FarFieldOptions {
            height: Some(x + 2.0),
            ..Default::default()
        },
    )
    .unwrap();
    let tail = base.tail(x);
    for i in 0..4 {
        for (a, b) in [
            (base.rdel(i).unwrap(), higher.rdel(i).unwrap()),
            (base.ri(i).unwrap(), higher.ri(i).unwrap()),
        ] {
            assert!(a.spread <= a.bound);
            for (ea, eb) in a.estimates.iter().zip(&b.estimates) {
                assert!((ea - eb).norm() <= 10.0 * tail * a.value.norm() + 1e-12, "{ea} vs {eb}");
            }
        }
    }
    let (a, b) = (base.rex().unwrap(), higher.rex().unwrap());
    assert!((a.estimates[0] - b.estimates[0]).norm() <= 10.0 * tail * a.value.norm() + 1e-12);
}

#[test]
fn too_low_extraction_height_is_refused() {
    let wave = WaveParams::new(1.663, PI / 6.0, 1.0).unwrap();
    let ff = FarField::new(
        &reference_cell(),
        &wave,
        FarFieldOptions {
            height: Some(0.6),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(matches!(ff.rdel(2), Err(FarFieldError::HeightTooSmall { .. })));
}

#[test]
fn r_ex_does_not_depend_on_the_probe_abscissa() {
    let wave = WaveParams::new(1.663, PI / 6.0, 1.0).unwrap();
    let ff = FarField::new(&reference_cell(), &wave, FarFieldOptions::default()).unwrap();
    let a = ff.rex_at(0.0).unwrap();
    let b = ff.rex_at(0.1).unwrap();
    for (x, y) in a.estimates.iter().zip(&b.estimates) {
        assert!((x - y).norm() < 1e-6 * a.value.norm());
    }
}

#[test]
fn aperture_constants_vary_at_first_order_across_the_aperture() {
    // the constants are independent of the probe only to leading order in
    // the aperture size; the variation is smooth and linear in the offset
    let wave = WaveParams::new(1.663, PI / 6.0, 1.0).unwrap();
    let ff = FarField::new(&reference_cell(), &wave, FarFieldOptions::default()).unwrap();
    let r = ff.cell().resonators[2];
    let centre = ff.rdel(2).unwrap().value;
    let d = |t: f64| (ff.rdel_at(2, [r.xi + t, r.h]).unwrap().value - centre).norm();
    let (half, quarter) = (d(0.5 * r.eps), d(0.25 * r.eps));
    assert!((half / quarter - 2.0).abs() < 0.2, "{half:.3e} {quarter:.3e}");
    assert!(half < 1e-2 * centre.norm());
    let ri = ff.ri(2).unwrap().value;
    let edge = ff.ri_at(2, [r.xi + r.eps, r.h]).unwrap().value;
    assert!((edge - ri).norm() < 1e-2 * ri.norm());
}

#[test]
fn period_doubling_relations() {
    let wave = WaveParams::new(1.5, PI / 3.0, 1.0).unwrap();
    let a = assemble_coupling(&single(), &wave, opts(150)).unwrap();
    let b = assemble_coupling(&single().repeated(2).unwrap(), &wave, opts(300)).unwrap();
    let ph = Complex64::from_polar(1.0, wave.k1());
    let shift = 2.0 / PI * 2f64.ln();
    let close = |x: Complex64, y: Complex64| (x - y).norm() < 1e-5 * y.norm();
    assert!(close(b.matrix[0][0] + ph.conj() * b.matrix[0][1] - shift, a.matrix[0][0]));
    assert!(close(b.matrix[1][1] + ph * b.matrix[1][0] - shift, a.matrix[0][0]));
    for i in 0..2 {
        assert!(close(2.0 * b.r[i], a.r[0]));
        assert!(close(2.0 * b.r_del[i], a.r_del[0]));
    }
    assert!(close(2.0 * b.r_ex, a.r_ex));
}

#[test]
fn mesh_refinement_converges() {
    let wave = WaveParams::new(1.663, PI / 6.0, 1.0).unwrap();
    let m: Vec<CMatrix> = [150, 300, 600]
        .iter()
        .map(|&n| assemble_coupling(&reference_cell(), &wave, opts(n)).unwrap().matrix())
        .collect();
    let f = crate::linalg::frobenius;
    let d1 = f(&(&m[0] - &m[1])) / f(&m[2]);
    let d2 = f(&(&m[1] - &m[2])) / f(&m[2]);
    assert!(d2 < 5e-3 && d2 < 0.6 * d1, "{d1:.2e} {d2:.2e}");
}

#[test]
fn branches_follow_crossing_eigenvalues() {
    let c = |a: f64, b: f64| Complex64::new(a, b);
    // two straight lines crossing between samples 2 and 3
    let samples: Vec<Vec<Complex64>> = (0..6)
        .map(|s| {
            let t = s as f64;
            let mut v = vec![c(t, 0.1), c(5.0 - t, -0.1), c(10.0, 0.0)];
            v.rotate_left(s % 3);
            v
        })
        .collect();
    let b = track_branches(&samples);
    assert_eq!(b.len(), 3);
    for (s, v) in b[0].iter().enumerate() {
        assert_eq!(*v, c(s as f64, 0.1));
    }
    for (s, v) in b[1].iter().enumerate() {
        assert_eq!(*v, c(5.0 - s as f64, -0.1));
    }
    assert!(worst_jump_ratio(&b) < 1.5);
    assert!(track_branches(&[]).is_empty());
}

