use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;

use super::{SpecFunError, EULER_GAMMA};

/// Above this argument the Hankel asymptotic expansion is accurate to
/// roughly `exp(-2z)`, far below double precision.
const ASYMPTOTIC_CUTOFF: f64 = 25.0;

/// `(J0(x), J1(x))` for `x > 0`.
pub fn bessel_j0_j1(x: f64) -> (f64, f64) {
    if x >= ASYMPTOTIC_CUTOFF {
        let (h0, h1) = asymptotic_pair(x);
        return (h0.re, h1.re);
    }
    let m = miller(x);
    (m.j0, m.j1)
}

/// `(Y0(x), Y1(x))` for `x > 0`.
pub fn bessel_y0_y1(x: f64) -> (f64, f64) {
    if x >= ASYMPTOTIC_CUTOFF {
        let (h0, h1) = asymptotic_pair(x);
        return (h0.im, h1.im);
    }
    let m = miller(x);
    neumann_from_miller(x, &m)
}

/// `(H0^(1)(x), H1^(1)(x))` for `x > 0`, sharing one recurrence.
pub fn hankel1_pair(x: f64) -> Result<(Complex64, Complex64), SpecFunError> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(SpecFunError::NonPositiveArgument(x));
    }
    if x >= ASYMPTOTIC_CUTOFF {
        return Ok(asymptotic_pair(x));
    }
    let m = miller(x);
    let (y0, y1) = neumann_from_miller(x, &m);
    Ok((Complex64::new(m.j0, y0), Complex64::new(m.j1, y1)))
}

/// Hankel function of the first kind `H_order^(1)(x)` for order 0 or 1.
pub fn hankel1(order: u32, x: f64) -> Result<Complex64, SpecFunError> {
    let (h0, h1) = hankel1_pair(x)?;
    match order {
        0 => Ok(h0),
        1 => Ok(h1),
        other => Err(SpecFunError::UnsupportedOrder(other)),
    }
}

struct MillerSums {
    j0: f64,
    j1: f64,
    /// sum_{k>=1} (-1)^(k+1) J_{2k} / k
    s0: f64,
    /// sum_{k>=1} (-1)^(k+1) (J_{2k-1} - J_{2k+1}) / k
    s1: f64,
}

/// Backward recurrence for `J_n(x)`, normalised by `J0 + 2 sum J_{2k} = 1`.
/// The Neumann-series sums for `Y0` and `Y1` are accumulated on the way down.
fn miller(x: f64) -> MillerSums {
    let start = (1.3 * x + 40.0).ceil() as usize;
    let start = start + (start % 2);
    let mut j_next = 0.0_f64; // J_{n+1}
    let mut j_cur = 1.0e-300_f64; // J_n
    let mut norm = 0.0;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut j1 = 0.0;
    let mut n = start;
    // values J_{n+1}, J_n known; J_{n-1} = (2n/x) J_n - J_{n+1}
    // keep J_{n+2} to form the J_{2k-1} - J_{2k+1} differences
    let mut j_next2 = 0.0_f64;
    loop {
        if n % 2 == 0 && n > 0 {
            let k = (n / 2) as f64;
            let sign = if (n / 2) % 2 == 1 { 1.0 } else { -1.0 };
            norm += 2.0 * j_cur;
            s0 += sign * j_cur / k;
        }
        if n % 2 == 1 {
            // n = 2k - 1, J_{2k+1} = j_next2
            let k = ((n + 1) / 2) as f64;
            let sign = if ((n + 1) / 2) % 2 == 1 { 1.0 } else { -1.0 };
            s1 += sign * (j_cur - j_next2) / k;
        }
        if n == 1 {
            j1 = j_cur;
        }
        if n == 0 {
            norm += j_cur;
            break;
        }
        let j_prev = 2.0 * n as f64 / x * j_cur - j_next;
        j_next2 = j_next;
        j_next = j_cur;
        j_cur = j_prev;
        n -= 1;
        if j_cur.abs() > 1.0e250 {
            let scale = 1.0e-250;
            j_cur *= scale;
            j_next *= scale;
            j_next2 *= scale;
            norm *= scale;
            s0 *= scale;
            s1 *= scale;
            j1 *= scale;
        }
    }
    let j0 = j_cur;
    MillerSums {
        j0: j0 / norm,
        j1: j1 / norm,
        s0: s0 / norm,
        s1: s1 / norm,
    }
}

fn neumann_from_miller(x: f64, m: &MillerSums) -> (f64, f64) {
    let lg = (0.5 * x).ln() + EULER_GAMMA;
    let y0 = (2.0 / PI) * (lg * m.j0 + 2.0 * m.s0);
    let y1 = -(2.0 / PI) * (m.j0 / x - lg * m.j1 + m.s1);
    (y0, y1)
}

fn asymptotic_pair(x: f64) -> (Complex64, Complex64) {
    let h = |nu: f64| -> Complex64 {
        let mu = 4.0 * nu * nu;
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        let mut prev = f64::INFINITY;
        for k in 1..200 {
            let kf = k as f64;
            let odd = 2.0 * kf - 1.0;
            term *= Complex64::new(0.0, 1.0) * ((mu - odd * odd) / (kf * 8.0 * x));
            let size = term.norm();
            if size > prev {
                break;
            }
            sum += term;
            prev = size;
            if size < 1e-17 * sum.norm() {
                break;
            }
        }
        let phase = x - nu * FRAC_PI_2 - FRAC_PI_4;
        (2.0 / (PI * x)).sqrt() * Complex64::from_polar(1.0, phase) * sum
    };
    (h(0.0), h(1.0))
}
