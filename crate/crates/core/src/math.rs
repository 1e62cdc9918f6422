//! Small numerical helpers shared across modules.

use num_traits::Float;

/// `log(exp(a) + exp(b))` without overflow; `-inf` acts as the zero element.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Log-sum-exp over a slice. Returns `-inf` for an empty slice or all `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Log-sum-exp over an iterator, two-pass free (streaming rescale).
pub fn log_sum_exp_iter<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut acc = 0.0f64;
    for x in xs {
        if x == f64::NEG_INFINITY {
            continue;
        }
        if x > max {
            acc = acc * (max - x).exp() + 1.0;
            max = x;
        } else {
            acc += (x - max).exp();
        }
    }
    if max == f64::NEG_INFINITY {
        max
    } else {
        max + acc.ln()
    }
}

/// Greatest common divisor.
pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Relative difference `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// A computed value together with a convergence residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Converged<T> {
    pub value: T,
    /// Size of the last iteration step; a proxy for the remaining error.
    pub residual: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_handles_zero_elements() {
        assert_eq!(log_add(f64::NEG_INFINITY, -3.0), -3.0);
        assert_eq!(log_add(-3.0, f64::NEG_INFINITY), -3.0);
        let v = log_add(0.5f64.ln(), 0.25f64.ln());
        assert!((v - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn lse_is_stable_at_extreme_magnitudes() {
        let v = log_sum_exp(&[-5000.0, -5000.0]);
        assert!((v - (-5000.0 + 2f64.ln())).abs() < 1e-12);
        let w = log_sum_exp_iter([-5000.0, -5000.0, f64::NEG_INFINITY]);
        assert!((v - w).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn gcd_basics() {
        assert_eq!(gcd(12, 18), 6);
        assert_eq!(gcd(0, 7), 7);
    }
}
