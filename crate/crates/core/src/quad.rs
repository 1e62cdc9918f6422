//! Filon-type quadrature for Fourier integrals `int_0^U g(u) e^{-iux} du`.
//!
//! On every panel `g` is replaced by its degree-4 Legendre interpolant through
//! the 5 Gauss-Legendre nodes, and the oscillatory moments
//! `int_{-1}^{1} P_k(t) e^{-iwt} dt = 2 (-i)^k j_k(w)` are used exactly, so the
//! rule stays accurate for arbitrarily large `x`. Panels are laid out in dyadic
//! blocks `[0, u0], [u0, 2u0], [2u0, 4u0], ...` with a fixed count per block,
//! which matches integrands that vary on the scale of `u` itself.

use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Float;

/// 5-point Gauss-Legendre nodes on `[-1, 1]`.
pub const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];

pub const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

fn legendre(t: f64) -> [f64; 5] {
    let mut p = [1.0, t, 0.0, 0.0, 0.0];
    for k in 1..4 {
        let kf = k as f64;
        p[k + 1] = ((2.0 * kf + 1.0) * t * p[k] - kf * p[k - 1]) / (kf + 1.0);
    }
    p
}

/// Spherical Bessel functions `j_0 .. j_4` at `z >= 0`.
pub fn sph_bessel(z: f64) -> [f64; 5] {
    let z = z.abs();
    if z < 4.0 {
        // power series; the upward recurrence cancels badly for small z
        let mut out = [0.0; 5];
        let y = -0.25 * z * z;
        let mut lead = 1.0;
        for (k, slot) in out.iter_mut().enumerate() {
            if k > 0 {
                lead *= z / (2 * k + 1) as f64;
            }
            let mut term = 1.0;
            let mut sum = 1.0;
            for i in 1..60 {
                term *= y / (i as f64 * (k + i) as f64 + 0.5 * i as f64);
                sum += term;
                if term.abs() < 1e-18 * sum.abs() {
                    break;
                }
            }
            *slot = lead * sum;
        }
        out
    } else {
        let (s, c) = (z.sin(), z.cos());
        let mut out = [0.0; 5];
        out[0] = s / z;
        out[1] = s / (z * z) - c / z;
        for k in 1..4 {
            out[k + 1] = (2 * k + 1) as f64 / z * out[k] - out[k - 1];
        }
        out
    }
}

/// Legendre expansion of an integrand on `[center - half, center + half]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub center: f64,
    pub half: f64,
    pub coeffs: [Complex64; 5],
}

impl Panel {
    /// Fits from integrand values at the mapped Gauss-Legendre nodes.
    pub fn fit(center: f64, half: f64, values: [Complex64; 5]) -> Self {
        let mut coeffs = [Complex64::new(0.0, 0.0); 5];
        for i in 0..5 {
            let p = legendre(GL5_NODES[i]);
            for k in 0..5 {
                coeffs[k] += values[i] * (GL5_WEIGHTS[i] * p[k]);
            }
        }
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c *= (2 * k + 1) as f64 / 2.0;
        }
        Self {
            center,
            half,
            coeffs,
        }
    }

    /// Abscissae at which `fit` expects values.
    pub fn nodes(center: f64, half: f64) -> [f64; 5] {
        GL5_NODES.map(|t| center + half * t)
    }

    /// `int g(u) e^{-iux} du` over the panel.
    pub fn fourier(&self, x: f64) -> Complex64 {
        let w = x * self.half;
        let j = sph_bessel(w);
        // sign of odd moments flips with the sign of x
        let sgn = if w < 0.0 { -1.0 } else { 1.0 };
        let mut acc = Complex64::new(0.0, 0.0);
        let mut phase = Complex64::new(1.0, 0.0);
        let minus_i = Complex64::new(0.0, -1.0);
        for k in 0..5 {
            let s = if k % 2 == 1 { sgn } else { 1.0 };
            acc += self.coeffs[k] * phase * (2.0 * j[k] * s);
            phase *= minus_i;
        }
        let rot = Complex64::new((x * self.center).cos(), -(x * self.center).sin());
        acc * rot * self.half
    }

    /// Interpolant value and derivative at the right end of the panel.
    pub fn right_end(&self) -> (Complex64, Complex64) {
        let mut v = Complex64::new(0.0, 0.0);
        let mut d = Complex64::new(0.0, 0.0);
        for (k, c) in self.coeffs.iter().enumerate() {
            v += c;
            d += c * ((k * (k + 1)) as f64 / 2.0);
        }
        (v, d / self.half)
    }
}

/// Panels for `[0, u0 2^(blocks-1)]`: block 0 is `[0, u0]`, block `b >= 1` is
/// `[u0 2^(b-1), u0 2^b]`, each cut into `per_block` equal panels.
pub fn dyadic_panels(u0: f64, per_block: usize, block: usize) -> impl Iterator<Item = (f64, f64)> {
    let (a, b) = if block == 0 {
        (0.0, u0)
    } else {
        let a = u0 * 2f64.powi(block as i32 - 1);
        (a, 2.0 * a)
    };
    let half = 0.5 * (b - a) / per_block as f64;
    (0..per_block).map(move |i| (a + (2 * i + 1) as f64 * half, half))
}

/// `int_U^inf g(u) e^{-iux} du` from two terms of the integration-by-parts
/// expansion, given `g(U)` and `g'(U)`. Needs `x U >> 1` and `g` varying on
/// the scale of `U`.
pub fn endpoint_tail(u: f64, g: Complex64, dg: Complex64, x: f64) -> Complex64 {
    if x == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let ix = Complex64::new(0.0, x);
    let rot = Complex64::new((x * u).cos(), -(x * u).sin());
    rot * (g / ix + dg / (ix * ix))
}

/// A sequence of fitted panels covering `[0, U]` block by block.
#[derive(Debug, Clone, Default)]
pub struct PanelSet {
    pub panels: Vec<Panel>,
    /// Index one past the last panel of every block.
    pub block_ends: Vec<usize>,
}

impl PanelSet {
    pub fn upper(&self) -> f64 {
        self.panels.last().map(|p| p.center + p.half).unwrap_or(0.0)
    }

    /// Integral over the first `blocks` blocks plus the endpoint tail.
    pub fn fourier_upto(&self, x: f64, blocks: usize) -> Complex64 {
        let end = self.block_ends[blocks - 1];
        let mut acc = Complex64::new(0.0, 0.0);
        for p in &self.panels[..end] {
            acc += p.fourier(x);
        }
        let last = &self.panels[end - 1];
        let (g, dg) = last.right_end();
        acc + endpoint_tail(last.center + last.half, g, dg, x)
    }

    /// Full integral with the tail term, and the change against the integral
    /// truncated one block earlier as an error estimate.
    pub fn fourier(&self, x: f64) -> (Complex64, f64) {
        let nb = self.block_ends.len();
        let full = self.fourier_upto(x, nb);
        let err = if nb >= 2 {
            (full - self.fourier_upto(x, nb - 1)).norm()
        } else {
            full.norm()
        };
        (full, err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_series_matches_closed_form() {
        for &z in &[0.5, 1.5, 3.9, 4.1, 7.0, 30.0] {
            let j = sph_bessel(z);
            let (s, c) = (z.sin(), z.cos());
            let j2 = (3.0 / (z * z) - 1.0) * s / z - 3.0 * c / (z * z);
            let j3 = (15.0 / z.powi(3) - 6.0 / z) * s / z - (15.0 / (z * z) - 1.0) * c / z;
            assert!((j[0] - s / z).abs() < 1e-14, "z={z}");
            assert!((j[2] - j2).abs() < 1e-12, "z={z}");
            assert!((j[3] - j3).abs() < 1e-11, "z={z}");
        }
        assert_eq!(sph_bessel(0.0), [1.0, 0.0, 0.0, 0.0, 0.0]);
        let j = sph_bessel(1e-3);
        assert!((j[4] - 1e-12 / 945.0).abs() < 1e-20);
    }

    #[test]
    fn quartic_moments_are_exact() {
        // int_0^2 u^4 e^{-iux} du equals the analytic value for any x
        for &x in &[0.0, 0.3, 5.0, 200.0] {
            let nodes = Panel::nodes(1.0, 1.0);
            let p = Panel::fit(1.0, 1.0, nodes.map(|u| Complex64::new(u.powi(4), 0.0)));
            let got = p.fourier(x);
            let want = if x == 0.0 {
                Complex64::new(6.4, 0.0)
            } else {
                // antiderivative e^{au} (u^4/a - 4u^3/a^2 + 12u^2/a^3 - 24u/a^4 + 24/a^5)
                let a = Complex64::new(0.0, -x);
                let prim = |u: f64| {
                    (a * u).exp()
                        * (u.powi(4) / a - 4.0 * u.powi(3) / (a * a) + 12.0 * u * u / a.powi(3)
                            - 24.0 * u / a.powi(4)
                            + 24.0 / a.powi(5))
                };
                prim(2.0) - prim(0.0)
            };
            assert!((got - want).norm() < 1e-12 * want.norm().max(1.0), "x={x} {got} {want}");
        }
    }

    #[test]
    fn exponential_fourier_transform() {
        // int_0^inf e^{-iux} / (1 - iu) du has real part pi e^{-x} for x > 0
        let mut set = PanelSet::default();
        for b in 0..24 {
            for (c, h) in dyadic_panels(1.0, 64, b) {
                let vals = Panel::nodes(c, h).map(|u| Complex64::new(1.0, 0.0) / Complex64::new(1.0, -u));
                set.panels.push(Panel::fit(c, h, vals));
            }
            set.block_ends.push(set.panels.len());
        }
        for &x in &[0.05, 1.0, 3.0] {
            let (v, err) = set.fourier(x);
            let want = core::f64::consts::PI * (-x as f64).exp();
            assert!((v.re - want).abs() < 1e-6, "x={x} {} {want}", v.re);
            assert!(err < 1e-4);
        }
    }

    #[test]
    fn right_end_of_fit() {
        let nodes = Panel::nodes(3.0, 0.5);
        let p = Panel::fit(3.0, 0.5, nodes.map(|u| Complex64::new(u * u, -u)));
        let (v, d) = p.right_end();
        assert!((v - Complex64::new(12.25, -3.5)).norm() < 1e-12);
        assert!((d - Complex64::new(7.0, -1.0)).norm() < 1e-11);
    }
}
