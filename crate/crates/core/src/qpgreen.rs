//! Quasi-periodic half-plane Green's function and the free-space kernel.
//!
//! Everything here lives in the microscopic frame (period 1). The
//! full-plane periodic sum
//!
//! `G(r) = sum_n exp(-i a_n r1) * (-exp(-s_n |r2|) / (2 s_n))`,
//! `a_n = k1 + 2 pi n`, `s_n = sqrt(a_n^2 - k^2)` with `s_0 = -i k2`,
//!
//! behaves like `(1/2pi) log|r|` at the origin and satisfies
//! `G(r + e1) = exp(-i k1) G(r)`. The half-plane function is
//! `Gamma+(z, x) = G(z - x) - G(z - xbar)` with `xbar = (x1, -x2)`.
//!
//! `G` is the complex conjugate of `-g` where `g` is the textbook lattice sum
//! `sum_m exp(i k1 m) (i/4) H0(k |r - m e1|)`; the Ewald evaluator works on
//! `g` and converts at the end.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::WaveParams;
use crate::specfun::{ein, expint_ladder, faddeeva_w, hankel1_pair, EULER_GAMMA};
use crate::{Point, C0, CI};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GreenError {
    #[error("source and observation points coincide at ({0}, {1}); the kernel is logarithmically singular")]
    Coincident(f64, f64),
    #[error(
        "case of empty resonance: k = {k} is within the Wood-anomaly band of diffraction order {order} \
         (|k - |2 pi n - k1|| = {gap:.3e})"
    )]
    EmptyResonance { order: i64, k: f64, gap: f64 },
    #[error("more than one propagating mode: k = {k} >= 2 pi - |k1| = {limit}")]
    MultiMode { k: f64, limit: f64 },
    #[error("spectral series would need {needed} terms at |r2| = {r2:.3e}; use the Ewald form")]
    SpectralTooSlow { needed: f64, r2: f64 },
    #[error("far-field coefficient tail bound {bound:.3e} exceeds tolerance {tol:.3e}; separation too small")]
    FarMargin { bound: f64, tol: f64 },
    #[error("wavenumber must be positive, got {0}")]
    BadWavenumber(f64),
}

/// Summation method for the periodic kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Spectral,
    Ewald,
    /// Spectral for `|r2|` above the switch height, Ewald below.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenOptions {
    /// Ewald splitting parameter; defaults to `sqrt(pi)` in the scaled frame.
    pub ewald_split: Option<f64>,
    /// Tail tolerance of the spectral series.
    pub spectral_tol: f64,
    /// `|r2|` at and above which [`Method::Auto`] uses the spectral series.
    pub switch_height: f64,
    /// Relative Wood-anomaly exclusion band.
    pub wood_band: f64,
    /// Largest admissible spectral truncation order.
    pub max_terms: f64,
}

impl Default for GreenOptions {
    fn default() -> Self {
        Self {
            ewald_split: None,
            spectral_tol: 1e-17,
            switch_height: 0.4,
            wood_band: 1e-2,
            max_terms: 1e6,
        }
    }
}

/// Value and gradient with respect to one of the arguments.
pub type ValueGrad = (Complex64, [Complex64; 2]);

/// Precomputed parameters for one scaled wave; immutable and cheap to clone.
#[derive(Debug, Clone)]
pub struct QpGreen {
    k: f64,
    k1: f64,
    k2: f64,
    split: f64,
    opts: GreenOptions,
    /// `(k / 2E)^(2q) / q!` for the spatial Ewald sum.
    weights: Vec<f64>,
}

const SPATIAL_IMAGES: i64 = 4;
const SPECTRAL_MODES: i64 = 6;

impl QpGreen {
    /// Kernel for a wave already in the microscopic frame.
    pub fn from_wave(wave: &WaveParams, opts: GreenOptions) -> Result<Self, GreenError> {
        Self::new(wave.k, wave.k1(), opts)
    }

    /// Kernel for wavenumber `k` and Bloch momentum `k1` with `|k1| < k`;
    /// `k2 = -sqrt(k^2 - k1^2)`.
    pub fn new(k: f64, k1: f64, opts: GreenOptions) -> Result<Self, GreenError> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(GreenError::BadWavenumber(k));
        }
        let limit = 2.0 * PI - k1.abs();
        if k >= limit {
            return Err(GreenError::MultiMode { k, limit });
        }
        let reach = (k / (2.0 * PI)).ceil() as i64 + 2;
        for n in -reach..=reach {
            let gap = (k - (2.0 * PI * n as f64 - k1).abs()).abs();
            if gap < opts.wood_band * k {
                return Err(GreenError::EmptyResonance { order: n, k, gap });
            }
        }
        let split = opts.ewald_split.unwrap_or(PI.sqrt());
        let ratio = (k / (2.0 * split)).powi(2);
        let mut weights = vec![1.0];
        let mut w = 1.0;
        for q in 1..200 {
            w *= ratio / q as f64;
            if w < 1e-19 {
                break;
            }
            weights.push(w);
        }
        Ok(Self {
            k,
            k1,
            k2: -(k * k - k1 * k1).sqrt(),
            split,
            opts,
            weights,
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    pub fn options(&self) -> &GreenOptions {
        &self.opts
    }

    /// The kernel with Bloch momentum `-k1`, which is the adjoint kernel:
    /// `Gamma+^(-k1)(x, y) = Gamma+^(k1)(y, x)`.
    pub fn reversed(&self) -> Self {
        Self {
            k1: -self.k1,
            ..self.clone()
        }
    }

    /// `s_n` for diffraction order `n` (purely imaginary for `n = 0`).
    pub fn s(&self, n: i64) -> Complex64 {
        let a = self.k1 + 2.0 * PI * n as f64;
        let d = a * a - self.k * self.k;
        if d >= 0.0 {
            Complex64::new(d.sqrt(), 0.0)
        } else {
            Complex64::new(0.0, (-d).sqrt())
        }
    }

    /// Slowest evanescent decay rate `min_{n != 0} s_n`.
    pub fn s1(&self) -> f64 {
        self.s(1).re.min(self.s(-1).re)
    }

    /// Periodic full-plane kernel `G(r)` and its gradient in `r`.
    pub fn periodic(&self, r: Point, method: Method) -> Result<ValueGrad, GreenError> {
        let shift = r[0].round();
        let rr = [r[0] - shift, r[1]];
        let (v, g) = match method {
            Method::Spectral => self.spectral(rr)?,
            Method::Ewald => self.ewald(rr, false)?,
            Method::Auto => {
                if rr[1].abs() >= self.opts.switch_height {
                    self.spectral(rr)?
                } else {
                    self.ewald(rr, false)?
                }
            }
        };
        let phase = Complex64::from_polar(1.0, -self.k1 * shift);
        Ok((v * phase, [g[0] * phase, g[1] * phase]))
    }

    /// `G(r) - (1/2pi) log|r|` and its gradient, for `|r1| <= 1/2`.
    /// The logarithm is cancelled analytically, so `r = 0` is allowed.
    pub fn periodic_regular(&self, r: Point) -> ValueGrad {
        debug_assert!(r[0].abs() <= 0.5 + 1e-12);
        self.ewald(r, true).expect("regular Ewald form is total")
    }

    fn spectral(&self, r: Point) -> Result<ValueGrad, GreenError> {
        let y = r[1].abs();
        let tol = self.opts.spectral_tol;
        let needed = ((tol.recip().ln() / y.max(1e-300)) + self.k1.abs() + self.k) / (2.0 * PI) + 1.0;
        if !(needed <= self.opts.max_terms) {
            return Err(GreenError::SpectralTooSlow { needed, r2: r[1] });
        }
        let sign = if r[1] >= 0.0 { 1.0 } else { -1.0 };
        let mut val = C0;
        let mut gx = C0;
        let mut gy = C0;
        let mut add = |n: i64| -> f64 {
            let a = self.k1 + 2.0 * PI * n as f64;
            let s = self.s(n);
            let t = Complex64::from_polar(1.0, -a * r[0]) * (-(-s * y).exp() / (2.0 * s));
            val += t;
            gx += -CI * a * t;
            gy += -s * sign * t;
            t.norm()
        };
        add(0);
        let mut n = 1;
        loop {
            let a = add(n);
            let b = add(-n);
            let bound = (-(self.s(n).re.min(self.s(-n).re)) * y).exp();
            if (a + b) < tol && bound < tol {
                break;
            }
            n += 1;
        }
        Ok((val, [gx, gy]))
    }

    /// Ewald form of `G`. With `regular` the `(1/2pi) log|r|` part of the
    /// central image is removed analytically.
    fn ewald(&self, r: Point, regular: bool) -> Result<ValueGrad, GreenError> {
        let e = self.split;
        let e2 = e * e;
        let (x, y) = (r[0], r[1]);
        if !regular && x == 0.0 && y == 0.0 {
            return Err(GreenError::Coincident(x, y));
        }
        let nq = self.weights.len();
        let kappa = self.k1;

        // spatial part of the textbook sum g
        let mut sv = C0;
        let mut sx = C0;
        let mut sy = C0;
        for m in -SPATIAL_IMAGES..=SPATIAL_IMAGES {
            let dx = x - m as f64;
            let rho2 = dx * dx + y * y;
            let arg = rho2 * e2;
            if arg > 45.0 {
                continue;
            }
            let phase = Complex64::from_polar(1.0, kappa * m as f64);
            let (mut v, mut d) = (0.0, 0.0);
            if m == 0 && regular {
                // q = 0: E1(X) + log(X) - 2 log E = -gamma - 2 log E + Ein(X)
                v += -EULER_GAMMA - 2.0 * e.ln() + ein(arg);
                let ein_prime = if arg < 1e-8 { 1.0 - 0.5 * arg } else { -(-arg).exp_m1() / arg };
                // d/dr_j Ein(rho^2 E^2) = Ein'(X) 2 E^2 r_j; collect as factor of r_j
                d += ein_prime * 2.0 * e2;
                if nq > 1 {
                    if arg == 0.0 {
                        for q in 1..nq {
                            v += self.weights[q] / q as f64;
                        }
                        // gradient terms carry a factor r_j = 0
                    } else {
                        let ladder = expint_ladder(arg, nq);
                        for q in 1..nq {
                            v += self.weights[q] * ladder[q];
                            d += self.weights[q] * (-2.0 * e2) * ladder[q - 1];
                        }
                    }
                }
            } else {
                let ladder = expint_ladder(arg, nq);
                let e0 = (-arg).exp() / arg;
                for q in 0..nq {
                    v += self.weights[q] * ladder[q];
                    let lower = if q == 0 { e0 } else { ladder[q - 1] };
                    d += self.weights[q] * (-2.0 * e2) * lower;
                }
            }
            sv += phase * v;
            sx += phase * (d * dx);
            sy += phase * (d * y);
        }
        let quarter_pi = 1.0 / (4.0 * PI);
        sv *= quarter_pi;
        sx *= quarter_pi;
        sy *= quarter_pi;

        // spectral part
        let ya = y.abs();
        let sign = if y >= 0.0 { 1.0 } else { -1.0 };
        let mut pv = C0;
        let mut px = C0;
        let mut py = C0;
        for n in -SPECTRAL_MODES..=SPECTRAL_MODES {
            let beta = kappa + 2.0 * PI * n as f64;
            let g2 = self.k * self.k - beta * beta;
            let gamma = if g2 >= 0.0 {
                Complex64::new(g2.sqrt(), 0.0)
            } else {
                Complex64::new(0.0, (-g2).sqrt())
            };
            let a = -CI * gamma / (2.0 * e);
            let c = (g2 / (4.0 * e2) - ya * ya * e2).exp();
            let zeta = a + ya * e;
            let minus = c * faddeeva_w(CI * zeta);
            let eta = a - ya * e;
            let plus = if eta.re >= 0.0 {
                c * faddeeva_w(CI * eta)
            } else {
                2.0 * (CI * gamma * ya).exp() - c * faddeeva_w(-CI * eta)
            };
            let wave = Complex64::from_polar(1.0, beta * x);
            let t = wave / gamma * (plus + minus);
            pv += t;
            px += CI * beta * t;
            py += CI * wave * (plus - minus) * sign;
        }
        let iq = CI * 0.25;
        pv *= iq;
        px *= iq;
        py *= iq;

        // G = conj(-g); for the regular form the removed piece of g is
        // -(1/2pi) log rho, which maps to +(1/2pi) log rho in G
        let val = -(sv + pv).conj();
        let gx = -(sx + px).conj();
        let gy = -(sy + py).conj();
        Ok((val, [gx, gy]))
    }

    /// `Gamma+(z, x)`.
    pub fn gamma_plus(&self, z: Point, x: Point, method: Method) -> Result<Complex64, GreenError> {
        if z == x {
            return Err(GreenError::Coincident(x[0], x[1]));
        }
        let r = [z[0] - x[0], z[1] - x[1]];
        let rb = [z[0] - x[0], z[1] + x[1]];
        if r == rb {
            return Ok(C0);
        }
        let (a, _) = self.periodic(r, method)?;
        let (b, _) = self.periodic(rb, method)?;
        Ok(a - b)
    }

    /// `Gamma+(z, x)` and its gradient with respect to `x`.
    pub fn gamma_plus_grad(&self, z: Point, x: Point) -> Result<ValueGrad, GreenError> {
        if z == x {
            return Err(GreenError::Coincident(x[0], x[1]));
        }
        let r = [z[0] - x[0], z[1] - x[1]];
        let rb = [z[0] - x[0], z[1] + x[1]];
        let (a, ga) = self.periodic(r, Method::Auto)?;
        if r == rb {
            return Ok((C0, [C0, -2.0 * ga[1]]));
        }
        let (b, gb) = self.periodic(rb, Method::Auto)?;
        Ok((a - b, [-ga[0] + gb[0], -ga[1] - gb[1]]))
    }

    /// `Gamma+(z, x) - (1/2pi) log|z - x|` and its gradient in `x`, finite
    /// (and computed without cancellation) as `x -> z`.
    pub fn gamma_plus_regular_grad(&self, z: Point, x: Point) -> Result<ValueGrad, GreenError> {
        let r = [z[0] - x[0], z[1] - x[1]];
        let rb = [z[0] - x[0], z[1] + x[1]];
        let (a, ga) = if r[0].abs() <= 0.5 && r[1].abs() < self.opts.switch_height {
            self.periodic_regular(r)
        } else {
            let (v, g) = self.periodic(r, Method::Auto)?;
            let rho2 = r[0] * r[0] + r[1] * r[1];
            let lg = 0.25 / PI * rho2.ln();
            let c = 1.0 / (2.0 * PI * rho2);
            (v - lg, [g[0] - c * r[0], g[1] - c * r[1]])
        };
        let (b, gb) = self.periodic(rb, Method::Auto)?;
        Ok((a - b, [-ga[0] + gb[0], -ga[1] - gb[1]]))
    }

    pub fn gamma_plus_regular(&self, z: Point, x: Point) -> Result<Complex64, GreenError> {
        Ok(self.gamma_plus_regular_grad(z, x)?.0)
    }

    /// Coefficient `P(x)` of the propagating mode, `Gamma+(z, x) ~ P(x) exp(-i k1 z1) exp(i k2 z2)`
    /// as `z2 -> infinity`, and its gradient in `x`.
    pub fn far_coefficient(&self, x: Point) -> ValueGrad {
        let (k1, k2) = (self.k1, self.k2);
        let ph = Complex64::from_polar(1.0, k1 * x[0]);
        let bracket = (Complex64::from_polar(1.0, -k2 * x[1]) - Complex64::from_polar(1.0, k2 * x[1]))
            / (2.0 * CI * k2);
        // (e^{-i k2 x2} - e^{i k2 x2}) / (2 i k2) = -sin(k2 x2) / k2
        let dbracket = -(k2 * x[1]).cos();
        let v = ph * bracket;
        (v, [CI * k1 * v, ph * dbracket])
    }

    /// Far coefficient with a check that the evanescent tail at height `z2`
    /// is below `tol` relative to `1 / (2 |k2|)`.
    pub fn gamma_plus_far(&self, z2: f64, x: Point, tol: f64) -> Result<Complex64, GreenError> {
        let d = z2 - x[1];
        let s1 = self.s1();
        let bound = if d > 0.0 {
            // geometric bound on sum_{n != 0} exp(-s_n d) / s_n, relative to 1/(2|k2|)
            let lead = (-s1 * d).exp() / s1;
            2.0 * lead / (1.0 - (-2.0 * PI * d).exp()) * 2.0 * self.k2.abs()
        } else {
            f64::INFINITY
        };
        if !(bound <= tol) {
            return Err(GreenError::FarMargin { bound, tol });
        }
        Ok(self.far_coefficient(x).0)
    }
}

/// Decomposition of a kernel near its logarithmic singularity:
/// `K(z, x) = phase * (1/2pi) log|z - x - shift e1| + value`, where `value`
/// is smooth in `x` near `z - shift e1` and `grad` is its gradient in `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub shift: f64,
    pub phase: Complex64,
    pub value: Complex64,
    pub grad: [Complex64; 2],
}

impl QpGreen {
    /// Splits `Gamma+(z, x)` about the periodic image of `x` nearest to `z`.
    pub fn split(&self, z: Point, x: Point) -> Result<Split, GreenError> {
        let r = [z[0] - x[0], z[1] - x[1]];
        let shift = r[0].round();
        let rs = [r[0] - shift, r[1]];
        let phase = Complex64::from_polar(1.0, -self.k1 * shift);
        let (a, ga) = if rs[1].abs() < self.opts.switch_height {
            self.periodic_regular(rs)
        } else {
            let (v, g) = self.periodic(rs, Method::Auto)?;
            let rho2 = rs[0] * rs[0] + rs[1] * rs[1];
            let c = 1.0 / (2.0 * PI * rho2);
            (v - 0.25 / PI * rho2.ln(), [g[0] - c * rs[0], g[1] - c * rs[1]])
        };
        let (a, ga) = (a * phase, [ga[0] * phase, ga[1] * phase]);
        let (b, gb) = self.periodic([r[0], z[1] + x[1]], Method::Auto)?;
        let value = a - b;
        Ok(Split {
            shift,
            phase,
            value,
            grad: [-ga[0] + gb[0], -ga[1] - gb[1]],
        })
    }
}

/// Split of the free kernel (no periodic images, unit phase).
pub fn free_split(z: Point, x: Point, k: f64) -> Split {
    let d = [x[0] - z[0], x[1] - z[1]];
    let rho2 = d[0] * d[0] + d[1] * d[1];
    let value = gamma_free_regular(z, x, k);
    let grad = if rho2 == 0.0 {
        [C0, C0]
    } else {
        let (_, g) = gamma_free_grad(z, x, k).expect("rho > 0");
        let c = 1.0 / (2.0 * PI * rho2);
        [g[0] - c * d[0], g[1] - c * d[1]]
    };
    Split {
        shift: 0.0,
        phase: Complex64::new(1.0, 0.0),
        value,
        grad,
    }
}

/// Free-space kernel `Gamma^k(z, x) = -(i/4) H0(k |z - x|)`.
pub fn gamma_free(z: Point, x: Point, k: f64) -> Result<Complex64, GreenError> {
    Ok(gamma_free_grad(z, x, k)?.0)
}

/// Free-space kernel and its gradient with respect to `x`.
pub fn gamma_free_grad(z: Point, x: Point, k: f64) -> Result<ValueGrad, GreenError> {
    let d = [x[0] - z[0], x[1] - z[1]];
    let rho = d[0].hypot(d[1]);
    if rho == 0.0 {
        return Err(GreenError::Coincident(x[0], x[1]));
    }
    let (h0, h1) = hankel1_pair(k * rho).map_err(|_| GreenError::BadWavenumber(k))?;
    let v = -0.25 * CI * h0;
    let c = 0.25 * CI * k * h1 / rho;
    Ok((v, [c * d[0], c * d[1]]))
}

/// `Gamma^k(z, x) - (1/2pi) log|z - x|`, including its limit at `x = z`.
pub fn gamma_free_regular(z: Point, x: Point, k: f64) -> Complex64 {
    let rho = (x[0] - z[0]).hypot(x[1] - z[1]);
    let kr = k * rho;
    let lk = (0.5 * k).ln() + EULER_GAMMA;
    if kr < 0.5 {
        // power series of J0 and of the regular part of Y0
        let q = 0.25 * kr * kr;
        let mut term = 1.0;
        let mut j0 = 1.0;
        let mut harm = 0.0;
        let mut ysum = 0.0;
        for j in 1..40 {
            let jf = j as f64;
            term *= -q / (jf * jf);
            harm += 1.0 / jf;
            j0 += term;
            ysum -= harm * term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        let log_part = if rho > 0.0 { rho.ln() * (j0 - 1.0) } else { 0.0 };
        let re = (lk * j0 + log_part + ysum) / (2.0 * PI);
        Complex64::new(re, -0.25 * j0)
    } else {
        let v = gamma_free(z, x, k).expect("rho > 0");
        v - rho.ln() / (2.0 * PI)
    }
}

#[cfg(test)]
mod tests;
