//! Iterated generating functions `f_n = f o ... o f`.
//!
//! Two representations keep the iteration accurate where it matters:
//!
//! * near `z = 1` the complement `1 - f(z) = (1 - z) Q(z)` is carried along,
//!   so arguments like `e^{iu/c_n}` with `c_n ~ 1e12` keep full relative
//!   precision in `1 - f_n`;
//! * on the positive axis the iteration runs on `t = -log s`, which cannot
//!   underflow and also yields the first two derivatives of the tilted law.

use num_complex::Complex64;
use num_traits::Float;

use crate::offspring::OffspringLaw;

/// A point in the unit disc carried together with its complement `1 - z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscPoint {
    pub z: Complex64,
    pub one_minus: Complex64,
}

impl DiscPoint {
    pub fn new(z: Complex64) -> Self {
        Self {
            z,
            one_minus: Complex64::new(1.0, 0.0) - z,
        }
    }

    /// `e^{i theta}` with the complement formed without cancellation.
    pub fn on_circle(theta: f64) -> Self {
        let half = (0.5 * theta).sin();
        let one_minus = Complex64::new(2.0 * half * half, -theta.sin());
        Self {
            z: Complex64::new(theta.cos(), theta.sin()),
            one_minus,
        }
    }

    /// `e^{-a + i b}` with `a >= 0`.
    pub fn exp_neg(a: f64, b: f64) -> Self {
        let w = Complex64::new(-a, b);
        // 1 - e^w = -expm1(w); expm1(x + iy) = expm1(x) cos y - 2 sin^2(y/2) + i e^x sin y
        let half = (0.5 * b).sin();
        let em = Complex64::new(
            (-a).exp_m1() * b.cos() - 2.0 * half * half,
            (-a).exp() * b.sin(),
        );
        Self {
            z: w.exp(),
            one_minus: -em,
        }
    }
}

/// One step `z -> f(z)`, choosing the representation that keeps precision.
#[inline]
pub fn step(law: &OffspringLaw, p: DiscPoint) -> DiscPoint {
    if p.one_minus.norm_sqr() < 0.25 {
        let one_minus = p.one_minus * law.complement_factor(p.z);
        DiscPoint {
            z: Complex64::new(1.0, 0.0) - one_minus,
            one_minus,
        }
    } else {
        DiscPoint::new(law.pgf_complex(p.z))
    }
}

/// `f_n` evaluated at a disc point.
pub fn iterate(law: &OffspringLaw, n: usize, mut p: DiscPoint) -> DiscPoint {
    for _ in 0..n {
        p = step(law, p);
    }
    p
}

/// `f_n(z)` for `|z| <= 1 + 1e-12`.
pub fn evaluate_fn(law: &OffspringLaw, n: usize, z: Complex64) -> Complex64 {
    iterate(law, n, DiscPoint::new(z)).z
}

/// `t_n(theta) = -log f_n(e^{-theta})` with first and second derivative in
/// `theta`.
///
/// `dt` is the mean and `-d2t` the variance of `Z_n` under the tilt
/// `P(Z_n = k) e^{-k theta} / f_n(e^{-theta})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegLogIterate {
    pub t: f64,
    pub dt: f64,
    pub d2t: f64,
}

impl NegLogIterate {
    pub fn tilted_mean(&self) -> f64 {
        self.dt
    }

    pub fn tilted_variance(&self) -> f64 {
        (-self.d2t).max(0.0)
    }
}

/// Runs the `t`-domain iteration from `theta >= 0`.
pub fn neg_log_iterate(law: &OffspringLaw, n: usize, theta: f64) -> NegLogIterate {
    let mut t = theta;
    let mut dt = 1.0;
    let mut d2t = 0.0;
    for _ in 0..n {
        let (g, g1, var) = law.tilted_log_moments(t);
        // g'' = -var
        d2t = -var * dt * dt + g1 * d2t;
        dt *= g1;
        t = g;
    }
    NegLogIterate { t, dt, d2t }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo() -> OffspringLaw {
        OffspringLaw::truncated_geometric(2.0, 1e-15).unwrap()
    }

    #[test]
    fn fn_at_one_and_zero() {
        let law = geo();
        for n in 0..6 {
            let one = evaluate_fn(&law, n, Complex64::new(1.0, 0.0));
            assert!((one - Complex64::new(1.0, 0.0)).norm() < 1e-14);
            let zero = evaluate_fn(&law, n, Complex64::new(0.0, 0.0));
            if n > 0 {
                assert_eq!(zero.norm(), 0.0);
            }
        }
    }

    #[test]
    fn geometric_iterate_closed_form() {
        let v = evaluate_fn(&geo(), 2, Complex64::new(0.5, 0.0));
        assert!((v.re - 0.2).abs() < 1e-14 && v.im.abs() < 1e-15);
    }

    #[test]
    fn complement_keeps_precision_near_one() {
        // geometric: 1 - f_n(s) = (1-s) m^n / (m^n - (m^n - 1) s)
        let law = geo();
        let n = 40;
        let m_n = 2f64.powi(n as i32);
        let u = 1.0;
        let p = iterate(&law, n, DiscPoint::on_circle(u / m_n));
        // limit ψ(u) = 1/(1 - iu), so 1 - ψ = -iu/(1-iu)
        let i = Complex64::new(0.0, 1.0);
        let exact = -i * u / (Complex64::new(1.0, 0.0) - i * u);
        assert!((p.one_minus - exact).norm() < 1e-9);
    }

    #[test]
    fn neg_log_matches_direct_evaluation() {
        let law = OffspringLaw::validate(&[(1, 0.3), (2, 0.3), (4, 0.4)]).unwrap();
        for &theta in &[1e-9, 0.01, 0.7, 3.0] {
            let r = neg_log_iterate(&law, 3, theta);
            let direct = evaluate_fn(&law, 3, Complex64::new((-theta).exp(), 0.0)).re;
            assert!(
                ((-r.t).exp() - direct).abs() < 1e-14 * direct.max(1e-300),
                "theta {theta}"
            );
            // derivative by central differences
            let h = 1e-5 * theta.max(1e-3);
            let tp = neg_log_iterate(&law, 3, theta + h).t;
            let tm = neg_log_iterate(&law, 3, (theta - h).max(0.0)).t;
            let fd = (tp - tm) / (theta + h - (theta - h).max(0.0));
            assert!((fd - r.dt).abs() < 1e-5 * r.dt, "dt at {theta}");
        }
    }

    #[test]
    fn neg_log_untilted_mean_is_m_pow_n() {
        let law = OffspringLaw::validate(&[(2, 0.5), (3, 0.5)]).unwrap();
        let r = neg_log_iterate(&law, 4, 0.0);
        assert!(r.t.abs() < 1e-15);
        assert!((r.dt - 2.5f64.powi(4)).abs() < 1e-11);
    }
}
