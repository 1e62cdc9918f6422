//! Cramér transforms of `Z_n` and the diagnostics built on them.
//!
//! For `h >= 0` the tilted variable `X_1(h, n)` has law
//! `P(X_1 = k) = e^{-kh/c_n} P(Z_n = k) / f_n(e^{-h/c_n})` and `S_l(h, n)` is the
//! sum of `l` independent copies. At `h = 0`, `S_l` is `Z_n` started from `l`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use num_traits::Float;

use crate::exactdist::{evaluate_fn, iterate_pmf};
use crate::genfn::neg_log_iterate;
use crate::limits::{LimitError, NormingSequence};
use crate::math::log_sum_exp_iter;
use crate::offspring::{classify, OffspringLaw};
use crate::pmf::{convolve_power, ConvPolicy, Pmf, PmfError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CramerError {
    #[error("target {x} is outside the admissible range ({lo}, {hi})")]
    TargetOutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("saddle bisection stalled at h = {h} for target {x}")]
    SaddleNotConverged { x: f64, h: f64 },
    #[error("tilt parameter must be positive here")]
    NonPositiveTilt,
    #[error(transparent)]
    Pmf(#[from] PmfError),
    #[error(transparent)]
    Limit(#[from] LimitError),
}

/// Law of `X_1(h, n)` together with the law of `Z_n` it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedSumSpec {
    pub h: f64,
    pub n: usize,
    pub base: Pmf,
    pub tilted: Pmf,
    pub mean1: f64,
    pub sigma1: f64,
    pub c_n: f64,
    /// `log sum_k e^{-kh/c_n} P(Z_n = k)` over the base window.
    pub log_normalizer: f64,
}

impl TiltedSumSpec {
    /// Distance between the window normalizer and `log f_n(e^{-h/c_n})`.
    pub fn normalizer_discrepancy(&self, law: &OffspringLaw) -> f64 {
        let t = neg_log_iterate(law, self.n, self.h / self.c_n).t;
        (self.log_normalizer + t).abs()
    }
}

/// Tilts `base` by `e^{-kh/c_n}`, normalizing over the stored window.
pub fn tilt(base: &Pmf, n: usize, h: f64, c_n: f64) -> TiltedSumSpec {
    assert!(h >= 0.0 && c_n > 0.0, "tilt needs h >= 0 and c_n > 0");
    let step = base.span() as f64 * h / c_n;
    let shifted: Vec<f64> = base
        .log_weights()
        .iter()
        .enumerate()
        .map(|(i, &l)| l - i as f64 * step)
        .collect();
    let log_z = log_sum_exp_iter(shifted.iter().copied());
    let logw: Vec<f64> = shifted.iter().map(|&l| l - log_z).collect();
    let defect = base.tail_defect();
    let mut tilted = Pmf::from_log(base.lo(), base.span(), logw, defect / (1.0 - defect).max(f64::MIN_POSITIVE));
    if base.has_unreliable() {
        tilted.set_unreliable((0..base.len()).map(|i| base.is_unreliable(i)).collect());
    }
    let (mean1, var1) = tilted.moments();
    TiltedSumSpec {
        h,
        n,
        base: base.clone(),
        tilted,
        mean1,
        sigma1: var1.sqrt(),
        c_n,
        log_normalizer: log_z - base.lo() as f64 * h / c_n,
    }
}

/// Builds `Z_n` under `policy` and tilts it with `c_n` from `norming`.
pub fn tilt_law(
    law: &OffspringLaw,
    n: usize,
    h: f64,
    norming: &NormingSequence,
    policy: &ConvPolicy,
) -> Result<TiltedSumSpec, CramerError> {
    let c_n = norming.checked(n)?;
    let base = iterate_pmf(law, n, 1, policy)?;
    Ok(tilt(&base, n, h, c_n))
}

/// Law of `S_l(h, n)`.
pub fn tilted_sum_pmf(spec: &TiltedSumSpec, ell: u64, policy: &ConvPolicy) -> Result<Pmf, PmfError> {
    if ell == 1 {
        return Ok(spec.tilted.clone());
    }
    convolve_power(&spec.tilted, ell, policy)
}

/// Exact mean and standard deviation of `X_1(h, n)` from the generating function.
pub fn tilted_moments(law: &OffspringLaw, n: usize, h: f64, c_n: f64) -> (f64, f64) {
    let it = neg_log_iterate(law, n, h / c_n);
    (it.tilted_mean(), it.tilted_variance().sqrt())
}

/// Solves `E X_1(h, n) / c_n = x` for `h`.
pub fn solve_saddle(law: &OffspringLaw, n: usize, x: f64, norming: &NormingSequence) -> Result<f64, CramerError> {
    let c_n = norming.checked(n)?;
    let mu = classify(law).mu as f64;
    let lo = mu.powi(n as i32) / c_n;
    let hi = neg_log_iterate(law, n, 0.0).tilted_mean() / c_n;
    let tol = 1e-10 * x;
    if (x - hi).abs() < tol {
        return Ok(0.0);
    }
    if !(x > lo && x < hi) {
        return Err(CramerError::TargetOutOfRange { x, lo, hi });
    }
    let mean = |h: f64| neg_log_iterate(law, n, h / c_n).tilted_mean() / c_n;
    let mut a = 0.0;
    let mut b = 1.0;
    let mut doublings = 0;
    while mean(b) > x {
        a = b;
        b *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(CramerError::TargetOutOfRange { x, lo, hi });
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (a + b);
        let v = mean(mid);
        if (v - x).abs() < tol {
            return Ok(mid);
        }
        if v > x {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= f64::EPSILON * b {
            break;
        }
    }
    let h = 0.5 * (a + b);
    if (mean(h) - x).abs() < tol {
        Ok(h)
    } else {
        Err(CramerError::SaddleNotConverged { x, h })
    }
}

/// `max_k P(X = k)`.
pub fn concentration_sup(pmf: &Pmf) -> f64 {
    pmf.max_log_prob().exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationRow {
    pub n: usize,
    pub ell: u64,
    pub c_n: f64,
    pub sup: f64,
    /// `l^{1/2} c_n sup_k P(S_l(h, n) = k)`.
    pub scaled: f64,
}

pub fn concentration_scaling_report(
    law: &OffspringLaw,
    h: f64,
    n_set: &[usize],
    ell_set: &[u64],
    norming: &NormingSequence,
    policy: &ConvPolicy,
) -> Result<Vec<ConcentrationRow>, CramerError> {
    let mut rows = Vec::with_capacity(n_set.len() * ell_set.len());
    for &n in n_set {
        let spec = tilt_law(law, n, h, norming, policy)?;
        for &ell in ell_set {
            let s = tilted_sum_pmf(&spec, ell, policy)?;
            let sup = concentration_sup(&s);
            rows.push(ConcentrationRow {
                n,
                ell,
                c_n: spec.c_n,
                sup,
                scaled: (ell as f64).sqrt() * spec.c_n * sup,
            });
        }
    }
    Ok(rows)
}

fn lclt_error_of(spec: &TiltedSumSpec, s: &Pmf, ell: u64) -> f64 {
    let d = spec.tilted.span() as f64;
    let root = (ell as f64).sqrt();
    let scale = root * spec.sigma1;
    let centre = ell as f64 * spec.mean1;
    let norm = d / (2.0 * PI).sqrt();
    s.iter()
        .map(|(k, l)| {
            let x = (k as f64 - centre) / scale;
            (scale * l.exp() - norm * (-0.5 * x * x).exp()).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest local CLT discrepancy of `S_l(h, n)` over its window.
pub fn lclt_error(
    law: &OffspringLaw,
    h: f64,
    n: usize,
    ell: u64,
    norming: &NormingSequence,
    policy: &ConvPolicy,
) -> Result<f64, CramerError> {
    if !(h > 0.0) {
        return Err(CramerError::NonPositiveTilt);
    }
    let spec = tilt_law(law, n, h, norming, policy)?;
    let s = tilted_sum_pmf(&spec, ell, policy)?;
    Ok(lclt_error_of(&spec, &s, ell))
}

/// As [`lclt_error`] for several `l` sharing one tilted law.
pub fn lclt_errors(
    spec: &TiltedSumSpec,
    ells: &[u64],
    policy: &ConvPolicy,
) -> Result<Vec<(u64, f64)>, CramerError> {
    ells.iter()
        .map(|&ell| {
            let s = tilted_sum_pmf(spec, ell, policy)?;
            Ok((ell, lclt_error_of(spec, &s, ell)))
        })
        .collect()
}

/// Largest `| |E e^{itS_l}| - |f_n(e^{-h/c_n + it}) / f_n(e^{-h/c_n})|^l |` over `ts`,
/// the left side summed from the pmf of `S_l`.
pub fn charfn_identity_residual(
    law: &OffspringLaw,
    spec: &TiltedSumSpec,
    s: &Pmf,
    ell: u64,
    ts: &[f64],
) -> f64 {
    let r = (-spec.h / spec.c_n).exp();
    let denom = evaluate_fn(law, spec.n, Complex64::new(r, 0.0)).re;
    let mut worst = 0.0f64;
    for &t in ts {
        let lhs: Complex64 = s
            .iter()
            .map(|(k, l)| Complex64::from_polar(l.exp(), t * k as f64))
            .sum();
        let rhs = (evaluate_fn(law, spec.n, Complex64::from_polar(r, t)).norm() / denom).powi(ell as i32);
        worst = worst.max((lhs.norm() - rhs).abs());
    }
    worst
}

/// `|psi_l(t) - e^{-t^2/2}|` for the standardized sum `(S_l - l mean1) / (l^{1/2} sigma1)`.
pub fn esseen_deviation(spec: &TiltedSumSpec, ell: u64, t: f64) -> f64 {
    let s = t / ((ell as f64).sqrt() * spec.sigma1);
    let psi1: Complex64 = spec
        .tilted
        .iter()
        .map(|(k, l)| Complex64::from_polar(l.exp(), s * (k as f64 - spec.mean1)))
        .sum();
    (psi1.powi(ell as i32) - Complex64::new((-0.5 * t * t).exp(), 0.0)).norm()
}

/// Range of `sigma(h, n) / c_n` over the grid.
pub fn sigma_ratio_band(
    law: &OffspringLaw,
    hs: &[f64],
    ns: &[usize],
    norming: &NormingSequence,
) -> Result<(f64, f64), CramerError> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &n in ns {
        let c_n = norming.checked(n)?;
        for &h in hs {
            let r = tilted_moments(law, n, h, c_n).1 / c_n;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok((lo, hi))
}

/// Largest deviation of `log tilted(k) - log base(k) + kh/c_n` from its mean.
pub fn tilt_consistency(spec: &TiltedSumSpec) -> f64 {
    let diffs: Vec<f64> = spec
        .tilted
        .iter()
        .zip(spec.base.iter())
        .filter(|(a, b)| a.1.is_finite() && b.1.is_finite())
        .map(|((k, a), (_, b))| a - b + k as f64 * spec.h / spec.c_n)
        .collect();
    if diffs.is_empty() {
        return 0.0;
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    diffs.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max)
}

/// Allowed growth of `A` over its `delta = 0` value when choosing `delta`.
const A_SLACK: f64 = 2.0;
const DELTA_STEP: f64 = 0.01;
const DELTA_STEPS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct NonuniformReport {
    pub n: usize,
    pub c_n: f64,
    pub delta: f64,
    pub a: f64,
    pub fit_ells: Vec<u64>,
    pub heldout_ells: Vec<u64>,
    /// Largest `lhs / bound` on the held-out rows; at most 1 when the bound holds.
    pub heldout_margin: f64,
    /// `(l, sup(2l) / sup(l))` with `sup(l) = sup_k c_n P(Z_n = k | Z_0 = l)`.
    pub doubling: Vec<(u64, f64)>,
    /// `(l, l^{1/2} sup(l))`, the `h = 0` concentration constant.
    pub h0_scaled: Vec<(u64, f64)>,
    pub ell0: u64,
}

impl NonuniformReport {
    pub fn heldout_holds(&self) -> bool {
        self.heldout_margin <= 1.0
    }

    /// Every doubling ratio within `rel` of `2^{-1/2}`.
    pub fn doubling_within(&self, rel: f64) -> bool {
        let target = core::f64::consts::FRAC_1_SQRT_2;
        self.doubling.iter().all(|&(_, r)| (r / target - 1.0).abs() <= rel)
    }
}

/// Fits `c_n P(Z_n = k | Z_0 = l) <= A e^{k/c_n} l^{-1/2} e^{-delta l}` over all
/// window points `k` and every other `l` of `ells` (sorted), then checks the
/// fit on the remaining `l`.
pub fn nonuniform_bound_check(
    law: &OffspringLaw,
    n: usize,
    ells: &[u64],
    norming: &NormingSequence,
    policy: &ConvPolicy,
) -> Result<NonuniformReport, CramerError> {
    let c_n = norming.checked(n)?;
    let ell0 = classify(law).alpha.ell0();
    let mut ells: Vec<u64> = ells.iter().copied().filter(|&l| l >= ell0).collect();
    ells.sort_unstable();
    ells.dedup();
    let base = iterate_pmf(law, n, 1, policy)?;
    // per l: max_k of c_n P e^{-k/c_n} l^{1/2}, and max_k of c_n P
    let mut weighted = Vec::with_capacity(ells.len());
    let mut sups = Vec::with_capacity(ells.len());
    for &ell in &ells {
        let s = if ell == 1 { base.clone() } else { convolve_power(&base, ell, policy)? };
        let w = s
            .iter()
            .map(|(k, l)| l - k as f64 / c_n)
            .fold(f64::NEG_INFINITY, f64::max);
        weighted.push((c_n.ln() + 0.5 * (ell as f64).ln() + w).exp());
        sups.push(c_n * concentration_sup(&s));
    }
    let (fit_idx, held_idx): (Vec<usize>, Vec<usize>) = (0..ells.len()).partition(|i| i % 2 == 0);
    let a_of = |delta: f64| {
        fit_idx
            .iter()
            .map(|&i| weighted[i] * (delta * ells[i] as f64).exp())
            .fold(0.0, f64::max)
    };
    let a0 = a_of(0.0);
    let mut delta = 0.0;
    let mut a = a0;
    for i in 1..=DELTA_STEPS {
        let d = DELTA_STEP * i as f64;
        let ad = a_of(d);
        if ad > A_SLACK * a0 {
            break;
        }
        delta = d;
        a = ad;
    }
    let heldout_margin = held_idx
        .iter()
        .map(|&i| weighted[i] * (delta * ells[i] as f64).exp() / a)
        .fold(0.0, f64::max);
    let mut doubling = Vec::new();
    for (i, &ell) in ells.iter().enumerate() {
        if let Ok(j) = ells.binary_search(&(2 * ell)) {
            doubling.push((ell, sups[j] / sups[i]));
        }
    }
    let h0_scaled = ells
        .iter()
        .zip(&sups)
        .map(|(&ell, &s)| (ell, (ell as f64).sqrt() * s))
        .collect();
    Ok(NonuniformReport {
        n,
        c_n,
        delta,
        a,
        fit_ells: fit_idx.iter().map(|&i| ells[i]).collect(),
        heldout_ells: held_idx.iter().map(|&i| ells[i]).collect(),
        heldout_margin,
        doubling,
        h0_scaled,
        ell0,
    })
}
