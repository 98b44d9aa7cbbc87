use std::f64::consts::PI;

use proptest::prelude::*;

use super::*;

fn reference_kernel() -> QpGreen {
    let wave = WaveParams::new(1.663, PI / 6.0, 1.0).unwrap();
    QpGreen::from_wave(&wave, GreenOptions::default()).unwrap()
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn ground_image_cancels() {
    let g = reference_kernel();
    for &(z, x1) in &[([0.1, 0.3], 0.2), ([-0.4, 0.05], 0.33), ([0.0, 1.3], -0.45)] {
        let v = g.gamma_plus(z, [x1, 0.0], Method::Auto).unwrap();
        assert!(v.norm() < 1e-12);
    }
}

#[test]
fn spectral_and_ewald_agree_at_separation_03() {
    let g = reference_kernel();
    let z = [0.1, 0.5];
    for &x in &[[0.1, 0.2], [-0.1, 0.28], [0.3, 0.25], [0.35, 0.8]] {
        let a = g.gamma_plus(z, x, Method::Spectral).unwrap();
        let b = g.gamma_plus(z, x, Method::Ewald).unwrap();
        assert!(rel(a, b) < 1e-10, "{x:?}: {a} vs {b}");
    }
}

#[test]
fn ewald_gradient_matches_spectral_gradient() {
    let g = reference_kernel();
    for &r in &[[0.2, 0.5], [-0.45, 0.41], [0.05, -0.6]] {
        let (va, ga) = g.periodic(r, Method::Spectral).unwrap();
        let (vb, gb) = g.periodic(r, Method::Ewald).unwrap();
        assert!(rel(vb, va) < 1e-10);
        assert!((ga[0] - gb[0]).norm() < 1e-10 * ga[0].norm().max(1.0));
        assert!((ga[1] - gb[1]).norm() < 1e-10 * ga[1].norm().max(1.0));
    }
}

#[test]
fn central_image_is_the_conjugate_free_kernel() {
    // G minus conj(Gamma^k) is smooth at the origin, and its value there is
    // the difference of the two regular limits
    let g = reference_kernel();
    let o = [0.0, 0.0];
    let lim = g.periodic_regular(o).0 - gamma_free_regular(o, o, g.k()).conj();
    for &r in &[[1e-4, 0.0], [0.0, 2e-4], [-1e-4, 1e-4]] {
        let d = g.periodic(r, Method::Ewald).unwrap().0 - gamma_free(o, r, g.k()).unwrap().conj();
        assert!((d - lim).norm() < 1e-3, "{r:?}");
    }
    let rho = 0.13f64.hypot(0.02);
    let (v, _) = g.periodic([0.13, 0.02], Method::Ewald).unwrap();
    let reg = g.periodic_regular([0.13, 0.02]).0;
    assert!((v - reg - rho.ln() / (2.0 * PI)).norm() < 1e-12);
}

#[test]
fn gradient_matches_finite_differences() {
    let g = reference_kernel();
    let z = [0.05, 0.3];
    let x = [0.2, 0.12];
    let (_, grad) = g.gamma_plus_grad(z, x).unwrap();
    let h = 1e-5;
    for j in 0..2 {
        let mut xp = x;
        let mut xm = x;
        xp[j] += h;
        xm[j] -= h;
        let fd = (g.gamma_plus(z, xp, Method::Auto).unwrap() - g.gamma_plus(z, xm, Method::Auto).unwrap())
            / (2.0 * h);
        assert!((fd - grad[j]).norm() < 1e-7 * grad[j].norm().max(1.0), "j = {j}: {fd} vs {}", grad[j]);
    }
}

#[test]
fn regular_part_identity_and_limit() {
    let g = reference_kernel();
    let z = [0.1, 0.3];
    for &d in &[1e-4, 1e-3, 1e-2, 0.1] {
        let x = [z[0] + 0.6 * d, z[1] - 0.8 * d];
        let full = g.gamma_plus(z, x, Method::Auto).unwrap();
        let reg = g.gamma_plus_regular(z, x).unwrap();
        assert!((full - reg - d.ln() / (2.0 * PI)).norm() < 1e-10);
    }
    let at = g.gamma_plus_regular(z, z).unwrap();
    let a = g.gamma_plus_regular(z, [z[0] + 1e-7, z[1]]).unwrap();
    let b = g.gamma_plus_regular(z, [z[0], z[1] - 1e-7]).unwrap();
    assert!((a - at).norm() < 1e-6 && (b - at).norm() < 1e-6);
    // the value at 1e-8 follows the trend of larger separations
    let c = g.gamma_plus_regular(z, [z[0] + 1e-8, z[1]]).unwrap();
    let p = g.gamma_plus_regular(z, [z[0] + 1e-3, z[1]]).unwrap();
    let q = g.gamma_plus_regular(z, [z[0] + 2e-3, z[1]]).unwrap();
    let linear = p + (p - q) * (1.0 - 1e-5);
    assert!((c - linear).norm() < 1e-5);
}

#[test]
fn free_kernel_properties() {
    let k = 1.663;
    let z = [0.1, 0.2];
    let x = [0.4, -0.1];
    assert_eq!(gamma_free(z, x, k).unwrap(), gamma_free(x, z, k).unwrap());
    assert!(gamma_free(z, z, k).is_err());
    let lim = Complex64::new(((0.5 * k).ln() + EULER_GAMMA) / (2.0 * PI), -0.25);
    assert!((gamma_free_regular(z, z, k) - lim).norm() < 1e-15);
    for &d in &[1e-6, 1e-3, 0.2, 0.31, 0.6] {
        let p = [z[0] + d, z[1]];
        let direct = gamma_free(z, p, k).unwrap() - d.ln() / (2.0 * PI);
        let tol = if k * d < 0.5 { 1e-9 } else { 1e-14 };
        assert!((gamma_free_regular(z, p, k) - direct).norm() < tol, "d = {d}");
    }
    // Helmholtz residual at distance 0.5
    let h = 1e-3;
    let c = [z[0] + 0.3, z[1] + 0.4];
    let f = |p: Point| gamma_free(z, p, k).unwrap();
    let lap = (f([c[0] + h, c[1]]) + f([c[0] - h, c[1]]) + f([c[0], c[1] + h]) + f([c[0], c[1] - h])
        - 4.0 * f(c))
        / (h * h);
    assert!((lap + k * k * f(c)).norm() < 1e-5 * k * k);
}

#[test]
fn far_coefficient_matches_full_sum_at_height_ten() {
    let g = reference_kernel();
    let x = [0.2, 0.3];
    let z = [0.37, 10.0];
    let full = g.gamma_plus(z, x, Method::Auto).unwrap();
    let coeff = full * Complex64::from_polar(1.0, g.k1() * z[0] - g.k2() * z[1]);
    let far = g.gamma_plus_far(z[1], x, 1e-6).unwrap();
    let tail = (-g.s1() * (z[1] - x[1])).exp();
    assert!((coeff - far).norm() <= tail.max(1e-14));
    let expect = ((g.k2() * x[1]).sin() / g.k2()).abs();
    assert!((far.norm() - expect).abs() < 1e-14);
    assert_eq!(g.far_coefficient([0.1, 0.0]).0, C0);
    assert!(g.gamma_plus_far(0.31, x, 1e-6).is_err());
}

#[test]
fn refusals() {
    let g = reference_kernel();
    assert!(matches!(g.gamma_plus([0.1, 0.2], [0.1, 0.2], Method::Auto), Err(GreenError::Coincident(..))));
    assert!(matches!(
        g.gamma_plus([0.1, 0.2], [0.1, 0.2 + 1e-9], Method::Spectral),
        Err(GreenError::SpectralTooSlow { .. })
    ));
    // normal incidence at k close to 2 pi hits the first Wood anomaly
    let err = QpGreen::new(2.0 * PI * 0.995, 0.0, GreenOptions::default()).unwrap_err();
    assert!(matches!(err, GreenError::EmptyResonance { .. }));
    assert!(err.to_string().contains("case of empty resonance"));
}

#[test]
fn reversed_momentum_is_the_adjoint() {
    let g = reference_kernel();
    let r = g.reversed();
    let (x, y) = ([0.12, 0.3], [-0.2, 0.15]);
    let a = r.gamma_plus(x, y, Method::Auto).unwrap();
    let b = g.gamma_plus(y, x, Method::Auto).unwrap();
    assert!(rel(a, b) < 1e-12);
}

fn point_pair() -> impl Strategy<Value = (Point, Point)> {
    ((-0.5f64..0.5), (0.0f64..0.6), (-0.5f64..0.5), (0.0f64..0.6)).prop_filter_map(
        "separated",
        |(a, b, c, d)| {
            let z = [a, b];
            let x = [c, d];
            ((a - c).hypot(b - d) > 0.05).then_some((z, x))
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn quasi_periodic_in_both_arguments((z, x) in point_pair()) {
        let g = reference_kernel();
        let base = g.gamma_plus(z, x, Method::Auto).unwrap();
        prop_assume!(base.norm() > 1e-6);
        let sx = g.gamma_plus(z, [x[0] + 1.0, x[1]], Method::Auto).unwrap();
        let sz = g.gamma_plus([z[0] + 1.0, z[1]], x, Method::Auto).unwrap();
        let fx = Complex64::from_polar(1.0, g.k1());
        let fz = Complex64::from_polar(1.0, -g.k1());
        prop_assert!((sx / base - fx).norm() < 1e-10);
        prop_assert!((sz / base - fz).norm() < 1e-10);
    }

    #[test]
    fn helmholtz_residual_away_from_source((z, x) in point_pair()) {
        let g = reference_kernel();
        let sep = (-1..=1)
            .map(|m| (z[0] - x[0] - m as f64).hypot(z[1] - x[1]))
            .fold(f64::INFINITY, f64::min);
        prop_assume!(sep > 0.3 && x[1] > 0.15);
        let f = |p: Point| g.gamma_plus(z, p, Method::Ewald).unwrap();
        let lap = laplacian(&f, x, 5e-3);
        let k2 = g.k() * g.k();
        prop_assert!((lap + k2 * f(x)).norm() < 1e-5 * k2 * f(x).norm().max(1e-2));
    }
}

/// Fourth-order five-point-per-axis Laplacian.
fn laplacian(f: &dyn Fn(Point) -> Complex64, x: Point, h: f64) -> Complex64 {
    let mut acc = -60.0 * f(x);
    for (dx, dy) in [(1.0, 0.0), (0.0, 1.0)] {
        let at = |s: f64| f([x[0] + s * h * dx, x[1] + s * h * dy]);
        acc += 16.0 * (at(1.0) + at(-1.0)) - (at(2.0) + at(-2.0));
    }
    acc / (12.0 * h * h)
}

#[test]
fn split_reassembles_the_kernel() {
    let g = reference_kernel();
    let z = [0.45, 0.2];
    for &x in &[[0.4, 0.25], [-0.48, 0.21], [0.1, 0.6], [0.45, 0.21]] {
        let sp = g.split(z, x).unwrap();
        let near = [x[0] + sp.shift, x[1]];
        let d = (z[0] - near[0]).hypot(z[1] - near[1]);
        let total = sp.phase * d.ln() / (2.0 * PI) + sp.value;
        let (v, grad) = g.gamma_plus_grad(z, x).unwrap();
        assert!((total - v).norm() < 1e-12, "{x:?}");
        let c = sp.phase / (2.0 * PI * d * d);
        let lg = [-(z[0] - near[0]) * c, -(z[1] - near[1]) * c];
        for j in 0..2 {
            assert!((sp.grad[j] + lg[j] - grad[j]).norm() < 1e-10 * grad[j].norm().max(1.0));
        }
    }
    let f = free_split(z, [0.4, 0.1], 2.0);
    let d = 0.05f64.hypot(0.1);
    let total = f.value + d.ln() / (2.0 * PI);
    assert!((total - gamma_free(z, [0.4, 0.1], 2.0).unwrap()).norm() < 1e-14);
}
