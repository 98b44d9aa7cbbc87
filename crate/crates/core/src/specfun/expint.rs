use super::EULER_GAMMA;

/// Exponential integral `E1(x)` for `x > 0`.
pub fn expint_e1(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x <= 1.0 {
        -EULER_GAMMA - x.ln() + ein(x)
    } else {
        // modified Lentz on the continued fraction for E1
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Entire part of the exponential integral,
/// `Ein(x) = sum_{j>=1} (-1)^(j+1) x^j / (j j!) = E1(x) + gamma + ln x`.
pub fn ein(x: f64) -> f64 {
    if x.abs() <= 2.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for j in 1..60 {
            let jf = j as f64;
            term *= -x / jf;
            let add = -term / jf;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        expint_e1(x) + EULER_GAMMA + x.ln()
    }
}

/// `[E_1(x), ..., E_{n}(x)]` by upward recurrence `E_{q+1} = (e^{-x} - x E_q) / q`.
///
/// Upward recurrence is stable for `x` not much larger than `n`, which holds
/// in the Ewald sums where `n` is small and `x` only grows when the terms are
/// already negligible.
pub fn expint_ladder(x: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let ex = (-x).exp();
    let mut e = expint_e1(x);
    out.push(e);
    for q in 1..n {
        e = (ex - x * e) / q as f64;
        out.push(e);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn e1_reference() {
        // E1 reference values (30-digit arithmetic)
        let cases = [
            (1e-4, 8.6332247045747054),
            (0.5, 0.55977359477616081),
            (1.0, 0.21938393439552028),
            (2.5, 0.024914917870269735),
            (10.0, 4.1569689296853243e-6),
            (40.0, 1.0367732614516570e-19),
        ];
        for (x, expect) in cases {
            let got = expint_e1(x);
            assert!(((got - expect) / expect).abs() < 1e-13, "E1({x}) = {got}");
        }
    }

    #[test]
    fn ein_continuity_at_switch() {
        let a = ein(2.0 - 1e-12);
        let b = ein(2.0 + 1e-12);
        assert!((a - b).abs() < 1e-11);
    }

    #[test]
    fn ladder_matches_integral_definition() {
        // E_n(x) = int_1^inf e^{-xt} t^{-n} dt, via substitution t = 1/s
        let x = 0.7;
        let ladder = expint_ladder(x, 5);
        for (idx, &val) in ladder.iter().enumerate() {
            let n = (idx + 1) as i32;
            let m = 20000;
            let mut s = 0.0;
            for i in 0..m {
                let u = (i as f64 + 0.5) / m as f64;
                s += (-x / u).exp() * u.powi(n - 2);
            }
            s /= m as f64;
            assert!((s - val).abs() < 1e-6, "E{n}: {val} vs {s}");
        }
    }
}
