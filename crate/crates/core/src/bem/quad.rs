//! Quadrature rules and the singular-integral identities for log kernels.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::BemError;
use crate::{Point, C0};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels.
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((c + 0.5 * h * xi, 0.5 * h * wi));
        }
    }
    out
}

/// `int_a^b log|x - y| ds_y` over the straight segment from `a` to `b`.
pub fn panel_log_integral(x: Point, a: Point, b: Point) -> f64 {
    let t = [b[0] - a[0], b[1] - a[1]];
    let len = t[0].hypot(t[1]);
    let t = [t[0] / len, t[1] / len];
    let v = [x[0] - a[0], x[1] - a[1]];
    let p = v[0] * t[0] + v[1] * t[1];
    let d = (v[0] * t[1] - v[1] * t[0]).abs();
    let prim = |u: f64| -> f64 {
        let r2 = u * u + d * d;
        let lg = if r2 > 0.0 { 0.5 * u * r2.ln() } else { 0.0 };
        let at = if d > 0.0 { d * (u / d).atan() } else { 0.0 };
        lg - u + at
    };
    prim(len - p) - prim(-p)
}

/// `int_a^b d/dnu_y log|x - y| ds_y` for the segment `a -> b` with normal
/// `(t2, -t1)`: the signed angle the segment subtends at `x`.
pub fn panel_angle(x: Point, a: Point, b: Point) -> f64 {
    let u = [a[0] - x[0], a[1] - x[1]];
    let v = [b[0] - x[0], b[1] - x[1]];
    let cross = u[0] * v[1] - u[1] * v[0];
    let dot = u[0] * v[0] + u[1] * v[1];
    let scale = (u[0].hypot(u[1])) * (v[0].hypot(v[1]));
    if cross.abs() <= 1e-14 * scale {
        // x on the segment's line: zero off the segment, and the principal
        // value is zero on it as well
        return 0.0;
    }
    cross.atan2(dot)
}

/// `int phi(t) log|t| dt` over `[t_0, t_last]` from samples `phi(t_j)`, where
/// the nodes are increasing and `t_0 < 0 < t_last` or one endpoint is `0`.
///
/// Uses `[log|t| Phi(t)] - int Phi(t)/t dt` with `Phi(t) = int_0^t phi`, where
/// `phi` is modelled by local cubics through the four nearest samples.
pub fn log_kernel_integral(t: &[f64], phi: &[Complex64]) -> Result<Complex64, BemError> {
    let n = t.len();
    if n < 4 || phi.len() != n {
        return Err(BemError::TooFewSamples(n));
    }
    let (a, b) = (t[0], t[n - 1]);
    if !(a <= 0.0 && b >= 0.0) || t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BemError::BadSamples);
    }
    // cubic model on interval j uses samples s..s+4 around it
    let stencil = |j: usize| -> usize { j.saturating_sub(1).min(n - 4) };
    let model = |s: usize, x: f64| -> Complex64 {
        let mut acc = C0;
        for i in s..s + 4 {
            let mut li = 1.0;
            for m in s..s + 4 {
                if m != i {
                    li *= (x - t[m]) / (t[i] - t[m]);
                }
            }
            acc += phi[i] * li;
        }
        acc
    };
    let (gx, gw) = gauss_legendre(8);
    // integral of the model over [lo, hi] inside interval j
    let piece = |j: usize, lo: f64, hi: f64| -> Complex64 {
        let s = stencil(j);
        let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        gx.iter().zip(&gw).map(|(x, w)| model(s, c + h * x) * (w * h)).sum()
    };
    let interval_of = |x: f64| -> usize {
        match t.iter().position(|&v| v > x) {
            Some(0) => 0,
            Some(p) => p - 1,
            None => n - 2,
        }
    };
    let j0 = interval_of(0.0);
    // Phi at every node, anchored at 0
    let mut big = vec![C0; n];
    let base = piece(j0, t[j0], 0.0) * -1.0; // Phi(t[j0]) = -int_{t[j0]}^0 phi
    big[j0] = base;
    for j in j0 + 1..n {
        big[j] = big[j - 1] + piece(j - 1, t[j - 1], t[j]);
    }
    for j in (0..j0).rev() {
        big[j] = big[j + 1] - piece(j, t[j], t[j + 1]);
    }
    let phi_big = |j: usize, x: f64| -> Complex64 { big[j] + piece(j, t[j], x) };
    let boundary = |j: usize, x: f64| -> Complex64 {
        if x == 0.0 {
            C0
        } else {
            phi_big(j, x) * x.abs().ln()
        }
    };
    let mut total = boundary(n - 2, b) - boundary(0, a);
    // int Phi(t)/t over each interval, splitting at 0
    let (qx, qw) = gauss_legendre(10);
    for j in 0..n - 1 {
        let (lo, hi) = (t[j], t[j + 1]);
        let mut parts = vec![(lo, hi)];
        if lo < 0.0 && hi > 0.0 {
            parts = vec![(lo, 0.0), (0.0, hi)];
        }
        for (p, q) in parts {
            let (c, h) = (0.5 * (p + q), 0.5 * (q - p));
            for (x, w) in qx.iter().zip(&qw) {
                let y = c + h * x;
                total -= phi_big(j, y) / y * (w * h);
            }
        }
    }
    Ok(total)
}

/// `int_0^T phi(t) (1/m) / (t^2 + 1/m^2) dt` through `t = tan(u) / m`, which
/// turns the near-singular Poisson kernel into the flat integrand `phi(tan(u)/m)`
/// on `[0, arctan(m T)]`.
pub fn poisson_kernel_integral(
    phi: impl Fn(f64) -> Complex64,
    m: f64,
    t_max: f64,
    panels: usize,
) -> Complex64 {
    let top = (m * t_max).atan();
    composite_gauss(0.0, top, panels.max(1), 16)
        .into_iter()
        .map(|(u, w)| phi(u.tan() / m) * w)
        .sum()
}
