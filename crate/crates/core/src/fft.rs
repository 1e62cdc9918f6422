//! Radix-2 complex FFT used by the fft-hybrid convolution mode.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use num_traits::Float;

fn bit_reverse(buf: &mut [Complex64]) {
    let n = buf.len();
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
}

/// In-place transform; `inverse` applies the conjugate kernel and the `1/n` scale.
pub(crate) fn fft(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    bit_reverse(buf);
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // twiddles computed directly per stage to avoid recurrence drift
        let tw: Vec<Complex64> = (0..half)
            .map(|k| {
                let a = sign * 2.0 * PI * k as f64 / len as f64;
                Complex64::new(a.cos(), a.sin())
            })
            .collect();
        for chunk in buf.chunks_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for k in 0..half {
                let t = hi[k] * tw[k];
                hi[k] = lo[k] - t;
                lo[k] += t;
            }
        }
        len <<= 1;
    }
    if inverse {
        let s = 1.0 / n as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
    }
}

/// Linear convolution of two real sequences, truncated to `out_len` entries.
pub(crate) fn convolve_real(a: &[f64], b: &[f64], out_len: usize) -> Vec<f64> {
    let full = a.len() + b.len() - 1;
    let n = full.next_power_of_two();
    let mut fa: Vec<Complex64> = Vec::with_capacity(n);
    // pack a into the real part and b into the imaginary part: one forward FFT
    for i in 0..n {
        let re = a.get(i).copied().unwrap_or(0.0);
        let im = b.get(i).copied().unwrap_or(0.0);
        fa.push(Complex64::new(re, im));
    }
    fft(&mut fa, false);
    let mut prod: Vec<Complex64> = Vec::with_capacity(n);
    for k in 0..n {
        let x = fa[k];
        let y = fa[(n - k) % n].conj();
        let fa_k = (x + y) * 0.5;
        let fb_k = (x - y) * Complex64::new(0.0, -0.5);
        prod.push(fa_k * fb_k);
    }
    fft(&mut prod, true);
    prod.iter().take(out_len.min(full)).map(|c| c.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_convolution() {
        let a = [0.1, 0.2, 0.3, 0.4];
        let b = [0.5, 0.25, 0.125];
        let got = convolve_real(&a, &b, 10);
        let mut want = [0.0; 6];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                want[i + j] += x * y;
            }
        }
        assert_eq!(got.len(), 6);
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn round_trip() {
        let mut v: Vec<Complex64> = (0..16).map(|i| Complex64::new(i as f64, -(i as f64))).collect();
        let orig = v.clone();
        fft(&mut v, false);
        fft(&mut v, true);
        for (a, b) in v.iter().zip(orig.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
