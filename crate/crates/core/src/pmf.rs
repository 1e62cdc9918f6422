//! Integer-supported mass functions stored in the log domain.
//!
//! A [`Pmf`] keeps only lattice points `lo, lo + d, lo + 2d, ...` and their
//! log-probabilities. Off-lattice points are structural zeros and are not
//! stored. Mass cut off at the right edge of the retained window is tracked
//! in `tail_defect`.
//!
//! All supports here are bounded below, so the convolution of two windows is
//! exact on the retained prefix no matter how much is cut on the right. The
//! window policy exploits this: lower deviations live at the left edge.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::fft;
use crate::math::log_sum_exp;

/// Maximal spread (in nats) of the entries sharing one linear-domain scale
/// during convolution. Products of two scaled entries stay above `e^{-600}`.
const BLOCK_RANGE: f64 = 300.0;
/// Estimated relative error an fft-hybrid entry must meet to be taken from a transform.
const FFT_REL_TOL: f64 = 1e-13;
const MAX_TILTS: usize = 64;
const MAX_TILT: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PmfError {
    #[error("lattice spans differ: {0} vs {1}")]
    LatticeMismatch(u64, u64),
    #[error(
        "result needs {natural} entries but the window cap is {cap}; truncating would drop mass {lost:e}"
    )]
    WindowOverflow { natural: usize, cap: usize, lost: f64 },
    #[error("invalid convolution policy: {0}")]
    InvalidPolicy(&'static str),
    #[error("convolution power must be at least 1")]
    InvalidPower,
}

/// Lattice carrying all mass: `{k : k = residue (mod span)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    pub span: u64,
    pub residue: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvMode {
    /// Block-rescaled exact summation; accurate across any dynamic range.
    DirectLog,
    /// FFT above `fft_threshold`, direct below; small entries flagged.
    FftHybrid,
}

/// What to do when a convolution result is wider than the window cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverflowRule {
    /// Trim at most `tail_tol` mass per step; fail with `WindowOverflow` otherwise.
    Error,
    /// Keep the leftmost `window_cap` entries and record the dropped mass.
    Truncate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvPolicy {
    pub mode: ConvMode,
    /// Maximal number of stored lattice points.
    pub window_cap: usize,
    pub fft_floor: f64,
    pub tail_tol: f64,
    pub fft_threshold: usize,
    pub overflow: OverflowRule,
}

impl Default for ConvPolicy {
    fn default() -> Self {
        Self {
            mode: ConvMode::DirectLog,
            window_cap: 1 << 16,
            fft_floor: 1e-13,
            tail_tol: 1e-12,
            fft_threshold: 4096,
            overflow: OverflowRule::Error,
        }
    }
}

impl ConvPolicy {
    /// Left-exact window of `width` lattice points: everything to the right
    /// is dropped and accounted for in the tail defect.
    pub fn prefix(width: usize) -> Self {
        Self {
            window_cap: width.max(1),
            overflow: OverflowRule::Truncate,
            ..Self::default()
        }
    }

    pub fn with_mode(mut self, mode: ConvMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), PmfError> {
        if self.window_cap == 0 {
            return Err(PmfError::InvalidPolicy("window_cap must be positive"));
        }
        if !(self.fft_floor > 0.0 && self.fft_floor <= 1e-6) {
            return Err(PmfError::InvalidPolicy("fft_floor must lie in (0, 1e-6]"));
        }
        if !(self.tail_tol >= 0.0) {
            return Err(PmfError::InvalidPolicy("tail_tol must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    lo: u64,
    span: u64,
    logw: Vec<f64>,
    tail_defect: f64,
    /// Per-entry unreliability flags; empty when every entry is reliable.
    unreliable: Vec<bool>,
}

impl Pmf {
    pub fn point_mass(k: u64, span: u64) -> Self {
        Self {
            lo: k,
            span: span.max(1),
            logw: vec![0.0],
            tail_defect: 0.0,
            unreliable: Vec::new(),
        }
    }

    /// Builds from linear probabilities at `lo, lo + span, ...`.
    pub fn from_probs(lo: u64, span: u64, probs: &[f64]) -> Self {
        let logw: Vec<f64> = probs.iter().map(|&p| p.ln()).collect();
        let mass: f64 = probs.iter().sum();
        Self {
            lo,
            span: span.max(1),
            logw,
            tail_defect: (1.0 - mass).max(0.0),
            unreliable: Vec::new(),
        }
    }

    pub fn from_log(lo: u64, span: u64, logw: Vec<f64>, tail_defect: f64) -> Self {
        Self {
            lo,
            span: span.max(1),
            logw,
            tail_defect,
            unreliable: Vec::new(),
        }
    }

    pub fn lo(&self) -> u64 {
        self.lo
    }

    /// Largest stored lattice point.
    pub fn hi(&self) -> u64 {
        self.lo + (self.logw.len() as u64 - 1) * self.span
    }

    pub fn len(&self) -> usize {
        self.logw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logw.is_empty()
    }

    pub fn lattice(&self) -> Lattice {
        Lattice {
            span: self.span,
            residue: self.lo % self.span,
        }
    }

    pub fn span(&self) -> u64 {
        self.span
    }

    pub fn tail_defect(&self) -> f64 {
        self.tail_defect
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.logw
    }

    /// Lattice point of entry `i`.
    pub fn k_at(&self, i: usize) -> u64 {
        self.lo + i as u64 * self.span
    }

    pub fn is_unreliable(&self, i: usize) -> bool {
        self.unreliable.get(i).copied().unwrap_or(false)
    }

    pub fn has_unreliable(&self) -> bool {
        self.unreliable.iter().any(|&u| u)
    }

    /// `log P(X = k)`; `-inf` off the lattice or outside the window.
    pub fn log_prob(&self, k: u64) -> f64 {
        if k < self.lo || (k - self.lo) % self.span != 0 {
            return f64::NEG_INFINITY;
        }
        let i = ((k - self.lo) / self.span) as usize;
        self.logw.get(i).copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn prob(&self, k: u64) -> f64 {
        self.log_prob(k).exp()
    }

    /// Whether `k` lies inside the stored window (on or off lattice).
    pub fn covers(&self, k: u64) -> bool {
        k >= self.lo && k <= self.hi()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.logw
            .iter()
            .enumerate()
            .map(move |(i, &l)| (self.k_at(i), l))
    }

    pub fn log_total_mass(&self) -> f64 {
        log_sum_exp(&self.logw)
    }

    pub fn total_mass(&self) -> f64 {
        self.log_total_mass().exp()
    }

    pub fn max_log_prob(&self) -> f64 {
        self.logw.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `log P(X <= k)` over the window.
    pub fn log_cdf(&self, k: u64) -> f64 {
        if k < self.lo {
            return f64::NEG_INFINITY;
        }
        let n = (((k - self.lo) / self.span) as usize + 1).min(self.logw.len());
        log_sum_exp(&self.logw[..n])
    }

    /// Mean and variance over the window, normalized by the window mass.
    pub fn moments(&self) -> (f64, f64) {
        let max = self.max_log_prob();
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for (i, &l) in self.logw.iter().enumerate() {
            let w = (l - max).exp();
            s0 += w;
            s1 += w * i as f64;
        }
        let mean_i = s1 / s0;
        let mut s2 = 0.0;
        for (i, &l) in self.logw.iter().enumerate() {
            let w = (l - max).exp();
            let dev = i as f64 - mean_i;
            s2 += w * dev * dev;
        }
        let span = self.span as f64;
        (
            self.lo as f64 + span * mean_i,
            span * span * s2 / s0,
        )
    }

    pub(crate) fn set_unreliable(&mut self, flags: Vec<bool>) {
        self.unreliable = flags;
    }

    pub(crate) fn set_tail_defect(&mut self, defect: f64) {
        self.tail_defect = defect;
    }

    /// Keeps the first `n` entries.
    pub(crate) fn truncate_to(&mut self, n: usize) {
        self.logw.truncate(n.max(1));
        if !self.unreliable.is_empty() {
            self.unreliable.truncate(n.max(1));
        }
    }

    pub(crate) fn drop_trailing_zeros(&mut self) {
        while self.logw.len() > 1 && self.logw[self.logw.len() - 1] == f64::NEG_INFINITY {
            self.logw.pop();
            if self.unreliable.len() > self.logw.len() {
                self.unreliable.pop();
            }
        }
    }
}

/// Splits an array of log-weights into consecutive blocks whose finite
/// entries span at most `BLOCK_RANGE` nats, returning `(start, end, scale)`.
fn scale_blocks(logw: &[f64]) -> Vec<(usize, usize, f64)> {
    let mut blocks = Vec::new();
    let mut start = 0;
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for (i, &l) in logw.iter().enumerate() {
        if l == f64::NEG_INFINITY {
            continue;
        }
        let nmax = max.max(l);
        let nmin = min.min(l);
        if nmax - nmin > BLOCK_RANGE && max != f64::NEG_INFINITY {
            blocks.push((start, i, max));
            start = i;
            max = l;
            min = l;
        } else {
            max = nmax;
            min = nmin;
        }
    }
    if max != f64::NEG_INFINITY {
        blocks.push((start, logw.len(), max));
    }
    blocks
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        let x: &[f64; 8] = x.try_into().expect("chunk of 8");
        let y: &[f64; 8] = y.try_into().expect("chunk of 8");
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Average log-slope between the first and last finite entries.
fn end_slope(l: &[f64]) -> f64 {
    let first = l.iter().position(|x| x.is_finite());
    let last = l.iter().rposition(|x| x.is_finite());
    match (first, last) {
        (Some(i), Some(j)) if j > i => (l[j] - l[i]) / (j - i) as f64,
        _ => 0.0,
    }
}

/// Exact convolution of log-weight arrays restricted to `out_len` outputs.
///
/// Both inputs are first tilted by a common `e^{theta i}`, which scales output
/// `k` by `e^{theta k}` and is undone at the end; `theta` is picked to flatten
/// the inputs so that fewer scale blocks are needed.
fn direct_log_convolve(a: &[f64], b: &[f64], out_len: usize) -> Vec<f64> {
    let tilted = |l: &[f64], theta: f64| -> Vec<f64> { l.iter().enumerate().map(|(i, &x)| x + theta * i as f64).collect() };
    let cost = |theta: f64| scale_blocks(&tilted(a, theta)).len() * scale_blocks(&tilted(b, theta)).len();
    let mut theta = 0.0;
    let mut best = cost(0.0);
    for cand in [-end_slope(a), -end_slope(b)] {
        if best > 1 && cand != 0.0 {
            let c = cost(cand);
            if c < best {
                best = c;
                theta = cand;
            }
        }
    }
    if theta == 0.0 {
        return blocked_log_convolve(a, b, out_len);
    }
    let mut out = blocked_log_convolve(&tilted(a, theta), &tilted(b, theta), out_len);
    for (k, o) in out.iter_mut().enumerate() {
        *o -= theta * k as f64;
    }
    out
}

fn blocked_log_convolve(a: &[f64], b: &[f64], out_len: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; out_len];
    let ba = scale_blocks(a);
    let bb = scale_blocks(b);
    let mut xa = vec![0.0; a.len()];
    for &(s, e, sc) in &ba {
        for i in s..e {
            xa[i] = (a[i] - sc).exp();
        }
    }
    let mut xb = vec![0.0; b.len()];
    for &(s, e, sc) in &bb {
        for i in s..e {
            xb[i] = (b[i] - sc).exp();
        }
    }
    // reversed copies turn every output entry into a contiguous dot product
    let rev: Vec<Vec<f64>> = bb.iter().map(|&(s, e, _)| xb[s..e].iter().rev().copied().collect()).collect();
    let mut pairs = Vec::new();
    for &(sa, ea, sca) in &ba {
        for (&(sb, eb, scb), rb) in bb.iter().zip(&rev) {
            if sa + sb < out_len {
                pairs.push((sa, ea, sb, eb, sca + scb, rb));
            }
        }
    }
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    for (o, slot) in out.iter_mut().enumerate() {
        terms.clear();
        let mut top = f64::NEG_INFINITY;
        for &(sa, ea, sb, eb, shift, rb) in &pairs {
            if o < sa + sb || o + 1 >= ea + eb {
                continue;
            }
            let ilo = sa.max((o + 1).saturating_sub(eb));
            let ihi = ea.min(o + 1 - sb);
            if ilo >= ihi {
                continue;
            }
            let r0 = ilo + eb - 1 - o;
            let v = dot(&xa[ilo..ihi], &rb[r0..r0 + (ihi - ilo)]);
            if v > 0.0 {
                terms.push((v, shift));
                top = top.max(shift);
            }
        }
        // every non-zero dot is at least e^{-2 BLOCK_RANGE}, so terms that
        // underflow here are negligible against the one at `top`
        *slot = match terms.len() {
            0 => f64::NEG_INFINITY,
            1 => terms[0].0.ln() + terms[0].1,
            _ => terms.iter().map(|&(v, sh)| v * (sh - top).exp()).sum::<f64>().ln() + top,
        };
    }
    out
}

/// Mean and variance of the index under the tilt `l_i + theta i`.
fn tilted_index_moments(l: &[f64], theta: f64) -> (f64, f64) {
    let c = l.len() as f64 / 2.0;
    let max = l
        .iter()
        .enumerate()
        .map(|(i, &x)| x + theta * (i as f64 - c))
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (i, &x) in l.iter().enumerate() {
        let w = (x + theta * (i as f64 - c) - max).exp();
        let y = i as f64 - c;
        s0 += w;
        s1 += w * y;
        s2 += w * y * y;
    }
    let mean = s1 / s0;
    (c + mean, (s2 / s0 - mean * mean).max(0.0))
}

/// Tilt putting the mean of the tilted convolution at index `k`
/// (safeguarded Newton).
fn tilt_for(a: &[f64], b: &[f64], k: usize, start: f64) -> f64 {
    let target = k as f64;
    let (mut lo, mut hi) = (-MAX_TILT, MAX_TILT);
    let mut t = start.clamp(lo, hi);
    for _ in 0..100 {
        let (ma, va) = tilted_index_moments(a, t);
        let (mb, vb) = tilted_index_moments(b, t);
        let gap = ma + mb - target;
        if gap.abs() < 0.25 {
            break;
        }
        if gap < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let var = va + vb;
        let newton = t - gap / var;
        t = if var > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-12 {
            break;
        }
    }
    t
}

/// FFT convolution made accurate across the full dynamic range by
/// exponential tilting.
///
/// Under a tilt `theta` the transform error is about `eps log2(n)` times the
/// product of the tilted inputs' 2-norms, so an entry is accepted from the tilt under which it is
/// close to the tilted peak. Tilts are added at the outermost uncertified
/// entries; anything left after `MAX_TILTS` rounds is summed exactly.
fn fft_log_convolve(a: &[f64], b: &[f64], out_len: usize, floor: f64) -> (Vec<f64>, Vec<bool>) {
    let n_fft = (a.len() + b.len() - 1).next_power_of_two();
    let log_noise = (f64::EPSILON * ((n_fft as f64).log2() + 1.0)).ln();
    let log_tol = FFT_REL_TOL.ln();
    let mut out = vec![f64::NEG_INFINITY; out_len];
    let mut done = vec![false; out_len];
    let mut pending = out_len;
    let mut theta = 0.0;
    let mut tried: Vec<f64> = Vec::new();
    let mut from_left = true;
    for _ in 0..MAX_TILTS {
        tried.push(theta);
        let ca = a.len() as f64 / 2.0;
        let cb = b.len() as f64 / 2.0;
        let ta: Vec<f64> = a.iter().enumerate().map(|(i, &x)| x + theta * (i as f64 - ca)).collect();
        let tb: Vec<f64> = b.iter().enumerate().map(|(j, &x)| x + theta * (j as f64 - cb)).collect();
        let ma = ta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mb = tb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let xa: Vec<f64> = ta.iter().map(|&l| (l - ma).exp()).collect();
        let xb: Vec<f64> = tb.iter().map(|&l| (l - mb).exp()).collect();
        let total = 0.5 * (xa.iter().map(|x| x * x).sum::<f64>().ln() + xb.iter().map(|x| x * x).sum::<f64>().ln());
        let r = fft::convolve_real(&xa, &xb, out_len);
        for (k, &v) in r.iter().enumerate() {
            if done[k] || v <= 0.0 {
                continue;
            }
            let lv = v.ln();
            if log_noise + total - lv < log_tol {
                out[k] = lv + ma + mb - theta * (k as f64 - ca - cb);
                done[k] = true;
                pending -= 1;
            }
        }
        if pending == 0 {
            break;
        }
        let target = if from_left {
            done.iter().position(|&d| !d)
        } else {
            done.iter().rposition(|&d| !d)
        }
        .expect("pending entries");
        from_left = !from_left;
        theta = tilt_for(a, b, target, theta);
        if tried.iter().any(|&t| (t - theta).abs() <= 1e-9 * (1.0 + t.abs())) {
            // no new tilt reaches this entry; settle it exactly
            out[target] = direct_entry(a, b, target);
            done[target] = true;
            pending -= 1;
            if pending == 0 {
                break;
            }
        }
    }
    for k in 0..out_len {
        if !done[k] {
            out[k] = direct_entry(a, b, k);
        }
    }
    let flags = floor_flags(&out, floor);
    (out, flags)
}

/// Marks entries below `floor` times the largest entry.
pub(crate) fn floor_flags(logw: &[f64], floor: f64) -> Vec<bool> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cut = max + floor.ln();
    logw.iter().map(|&l| l < cut).collect()
}

fn direct_entry(a: &[f64], b: &[f64], k: usize) -> f64 {
    let lo = k.saturating_sub(b.len() - 1);
    let hi = k.min(a.len() - 1);
    if lo > hi {
        return f64::NEG_INFINITY;
    }
    crate::math::log_sum_exp_iter((lo..=hi).map(|i| a[i] + b[k - i]))
}

/// Convolution `a * b` under a window policy.
pub fn convolve(a: &Pmf, b: &Pmf, policy: &ConvPolicy) -> Result<Pmf, PmfError> {
    policy.validate()?;
    if a.span != b.span {
        return Err(PmfError::LatticeMismatch(a.span, b.span));
    }
    let natural = a.len() + b.len() - 1;
    let out_len = natural.min(policy.window_cap);
    let use_fft = policy.mode == ConvMode::FftHybrid && out_len > policy.fft_threshold;
    let (logw, mut flags) = if use_fft {
        fft_log_convolve(&a.logw, &b.logw, out_len, policy.fft_floor)
    } else {
        (direct_log_convolve(&a.logw, &b.logw, out_len), Vec::new())
    };
    if !use_fft && (a.has_unreliable() || b.has_unreliable()) {
        flags = floor_flags(&logw, policy.fft_floor);
    }
    let mut out = Pmf {
        lo: a.lo + b.lo,
        span: a.span,
        logw,
        tail_defect: 0.0,
        unreliable: flags,
    };
    let in_log = a.log_total_mass() + b.log_total_mass();
    let kept = out.log_total_mass();
    let lost = if natural > out_len {
        (in_log.exp() * -(kept - in_log).min(0.0).exp_m1()).max(0.0)
    } else {
        0.0
    };
    if policy.overflow == OverflowRule::Error {
        if lost > policy.tail_tol {
            return Err(PmfError::WindowOverflow {
                natural,
                cap: policy.window_cap,
                lost,
            });
        }
        trim_right_tail(&mut out, policy.tail_tol - lost);
    }
    out.drop_trailing_zeros();
    let complement = -out.log_total_mass().exp_m1();
    out.tail_defect = (a.tail_defect + b.tail_defect).max(complement).clamp(0.0, 1.0);
    Ok(out)
}

/// Drops the longest right tail with total mass at most `budget`.
pub(crate) fn trim_right_tail(p: &mut Pmf, budget: f64) {
    if budget <= 0.0 {
        return;
    }
    let mut acc = 0.0;
    let mut keep = p.logw.len();
    while keep > 1 {
        let w = p.logw[keep - 1].exp();
        if acc + w > budget {
            break;
        }
        acc += w;
        keep -= 1;
    }
    p.truncate_to(keep);
}

/// Law of the sum of `ell` i.i.d. copies, by binary exponentiation.
pub fn convolve_power(p: &Pmf, ell: u64, policy: &ConvPolicy) -> Result<Pmf, PmfError> {
    if ell == 0 {
        return Err(PmfError::InvalidPower);
    }
    policy.validate()?;
    let mut result: Option<Pmf> = None;
    let mut base = p.clone();
    let mut e = ell;
    loop {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => convolve(&r, &base, policy)?,
            });
        }
        e >>= 1;
        if e == 0 {
            break;
        }
        base = convolve(&base, &base, policy)?;
    }
    Ok(result.expect("ell >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    #[test]
    fn two_point_self_convolution() {
        let p = Pmf::from_probs(2, 1, &[0.5, 0.5]);
        let c = convolve(&p, &p, &ConvPolicy::default()).unwrap();
        assert_eq!((c.lo(), c.hi()), (4, 6));
        assert!(close(c.prob(4), 0.25, 1e-15));
        assert!(close(c.prob(5), 0.5, 1e-15));
        assert!(close(c.prob(6), 0.25, 1e-15));
        assert_eq!(c.lattice().residue, 0);
    }

    #[test]
    fn point_mass_shifts() {
        let p = Pmf::from_probs(3, 1, &[0.2, 0.3, 0.5]);
        let c = convolve(&Pmf::point_mass(1, 1), &p, &ConvPolicy::default()).unwrap();
        assert_eq!(c.lo(), 4);
        for k in 3..6 {
            assert!(close(c.prob(k + 1), p.prob(k), 1e-15));
        }
    }

    #[test]
    fn power_four_is_binomial() {
        let p = Pmf::from_probs(2, 1, &[0.5, 0.5]);
        let c = convolve_power(&p, 4, &ConvPolicy::default()).unwrap();
        let want = [1.0, 4.0, 6.0, 4.0, 1.0];
        for (i, w) in want.iter().enumerate() {
            assert!(close(c.prob(8 + i as u64), w / 16.0, 1e-14));
        }
        assert_eq!(convolve_power(&p, 1, &ConvPolicy::default()).unwrap(), p);
        assert_eq!(
            convolve_power(&p, 0, &ConvPolicy::default()),
            Err(PmfError::InvalidPower)
        );
    }

    #[test]
    fn lattice_mismatch_rejected() {
        let a = Pmf::from_probs(2, 2, &[0.5, 0.5]);
        let b = Pmf::from_probs(1, 1, &[0.5, 0.5]);
        assert_eq!(
            convolve(&a, &b, &ConvPolicy::default()),
            Err(PmfError::LatticeMismatch(2, 1))
        );
    }

    #[test]
    fn extreme_dynamic_range_is_preserved() {
        // entries spanning thousands of nats must convolve to relative accuracy
        let la: Vec<f64> = (0..40).map(|i| -(i as f64) * 120.0).collect();
        let a = Pmf::from_log(1, 1, la.clone(), 0.0);
        let c = convolve(&a, &a, &ConvPolicy::prefix(79)).unwrap();
        for k in 0..79usize {
            // brute force in log domain
            let terms: Vec<f64> = (0..40)
                .filter(|&i| k >= i && k - i < 40)
                .map(|i| la[i] + la[k - i])
                .collect();
            let want = log_sum_exp(&terms);
            assert!(close(c.log_weights()[k], want, 1e-14), "k={k}");
        }
    }

    #[test]
    fn overflow_and_truncation() {
        let p = Pmf::from_probs(1, 1, &[0.5, 0.5]);
        let strict = ConvPolicy {
            window_cap: 2,
            ..ConvPolicy::default()
        };
        assert!(matches!(
            convolve(&p, &p, &strict),
            Err(PmfError::WindowOverflow { .. })
        ));
        let c = convolve(&p, &p, &ConvPolicy::prefix(2)).unwrap();
        assert_eq!(c.len(), 2);
        assert!(close(c.tail_defect(), 0.25, 1e-12));
        assert!(close(c.prob(2), 0.25, 1e-15));
    }

    #[test]
    fn tiny_tails_are_trimmed_within_budget() {
        let p = Pmf::from_probs(1, 1, &[1.0 - 1e-14, 1e-14]);
        let c = convolve(&p, &p, &ConvPolicy::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c.tail_defect() <= 1e-12);
    }

    #[test]
    fn fft_mode_matches_direct() {
        let probs: Vec<f64> = (0..5000).map(|i| 0.008 * (-0.008 * i as f64).exp()).collect();
        let p = Pmf::from_probs(1, 1, &probs);
        let pol = ConvPolicy::prefix(6000);
        let d = convolve(&p, &p, &pol).unwrap();
        let f = convolve(&p, &p, &pol.with_mode(ConvMode::FftHybrid)).unwrap();
        let cut = d.max_log_prob() + (1e-13f64).ln();
        for i in 0..d.len() {
            if d.log_weights()[i] > cut {
                assert!(!f.is_unreliable(i));
                assert!(close(d.log_weights()[i].exp(), f.log_weights()[i].exp(), 1e-10));
            }
        }
    }

    mod props {
        use alloc::vec::Vec;
    use crate::pmf::convolve;
    use crate::{ConvMode, ConvPolicy, Pmf};
    use proptest::prelude::*;

    fn pmf_strategy() -> impl Strategy<Value = Pmf> {
        (0u64..5, prop::collection::vec(0.0f64..1.0, 1..300)).prop_map(|(lo, mut w)| {
            w[0] += 0.1;
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            Pmf::from_probs(lo, 1, &w)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn direct_and_fft_convolution_agree(a in pmf_strategy(), b in pmf_strategy()) {
            let direct = convolve(&a, &b, &ConvPolicy::default()).unwrap();
            let fast = ConvPolicy { fft_threshold: 1, ..ConvPolicy::default().with_mode(ConvMode::FftHybrid) };
            let fft = convolve(&a, &b, &fast).unwrap();
            prop_assert_eq!(direct.lo(), a.lo() + b.lo());
            prop_assert!((direct.total_mass() - 1.0).abs() < 1e-12);
            for (k, l) in direct.iter() {
                if l > -20.0 {
                    prop_assert!((fft.log_prob(k) - l).abs() < 1e-8, "k={} {} {}", k, fft.log_prob(k), l);
                }
            }
        }
    }
    }
}
