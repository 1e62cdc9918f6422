//! Limit objects of `Z_n / c_n`: norming constants, the Schröder and Böttcher
//! functions, the Laplace and characteristic functions of `W`, and the
//! density and distribution function of `W` by Fourier inversion.
//!
//! For arguments beyond a fixed reference size the transforms use the
//! functional equations `psi(m u) = f(psi(u))` and `phi(m h) = f(phi(h))`, so
//! `psi(u) = f_j(psi_n(u / m^j))`. This is the same as running the iteration
//! `j` generations deeper and keeps `u / c_n` small for every `u`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use num_traits::Float;

use crate::exactdist::{iterate_generations, prefix_policy_for};
use crate::genfn::{self, neg_log_iterate, DiscPoint, NegLogIterate};
use crate::math::Converged;
use crate::offspring::{classify, Alpha, LawProfile, OffspringLaw};
use crate::pmf::{ConvPolicy, PmfError};
use crate::quad::{dyadic_panels, Panel, PanelSet};

/// Arguments of `psi` and `phi` above this size go through the functional equation.
const REF_ARG: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LimitError {
    #[error("the law is not of Schröder type")]
    NotSchroeder,
    #[error("the law is not of Böttcher type")]
    NotBoettcher,
    #[error("root bracketing failed at generation {0}")]
    RootBracketFailure(usize),
    #[error("quadrature did not converge at x = {x}: error estimate {err:e}")]
    QuadratureNotConverged { x: f64, err: f64 },
    #[error("generation {n} is beyond the norming horizon {horizon}")]
    BeyondHorizon { n: usize, horizon: usize },
    #[error("argument out of range: {0}")]
    OutOfDomain(&'static str),
    #[error(transparent)]
    Pmf(#[from] PmfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormingMode {
    /// `c_n = m^n`.
    Power,
    /// `c_n = 1 / h_n` with `f_n(e^{-h_n}) = e^{-1}`.
    Seneta,
}

/// `c_0, ..., c_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormingSequence {
    mode: NormingMode,
    c: Vec<f64>,
    m: f64,
}

impl NormingSequence {
    pub fn mode(&self) -> NormingMode {
        self.mode
    }

    pub fn horizon(&self) -> usize {
        self.c.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.c
    }

    /// Offspring mean of the law the sequence was built for.
    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn get(&self, n: usize) -> Option<f64> {
        self.c.get(n).copied()
    }

    /// `c_n`; panics beyond the horizon.
    pub fn c(&self, n: usize) -> f64 {
        self.c[n]
    }

    pub(crate) fn checked(&self, n: usize) -> Result<f64, LimitError> {
        self.get(n).ok_or(LimitError::BeyondHorizon {
            n,
            horizon: self.horizon(),
        })
    }
}

/// Norming constants up to generation `n_max`.
pub fn norming(law: &OffspringLaw, n_max: usize, mode: NormingMode) -> Result<NormingSequence, LimitError> {
    let m = law.mean();
    let c = match mode {
        NormingMode::Power => (0..=n_max).map(|n| m.powi(n as i32)).collect(),
        NormingMode::Seneta => {
            let mut c = Vec::with_capacity(n_max + 1);
            for n in 0..=n_max {
                c.push(1.0 / seneta_root(law, n)?);
            }
            c
        }
    };
    Ok(NormingSequence { mode, c, m })
}

/// Solves `t_n(h) = -log f_n(e^{-h}) = 1`. Since `h <= t_n(h) <= m^n h`, the
/// root lies in `[m^{-n}, 1]`.
fn seneta_root(law: &OffspringLaw, n: usize) -> Result<f64, LimitError> {
    let t = |h: f64| neg_log_iterate(law, n, h);
    let mut hi = 1.0;
    let mut lo = law.mean().powi(-(n as i32));
    if t(lo).t > 1.0 + 1e-15 || t(hi).t < 1.0 - 1e-15 {
        return Err(LimitError::RootBracketFailure(n));
    }
    for _ in 0..400 {
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
        let mid = (lo * hi).sqrt();
        if t(mid).t < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut h = (lo * hi).sqrt();
    for _ in 0..2 {
        let r = t(h);
        if r.dt > 0.0 {
            let next = h - (r.t - 1.0) / r.dt;
            if next >= lo * (1.0 - 1e-12) && next <= hi * (1.0 + 1e-12) {
                h = next;
            }
        }
    }
    Ok(h)
}

/// `S_n(z) = (f_n(z) - q) / gamma^n` with the last increment as residual.
pub fn schroeder_function(law: &OffspringLaw, z: Complex64, n_iters: usize) -> Result<Converged<Complex64>, LimitError> {
    let prof = classify(law);
    if !prof.is_schroeder() {
        return Err(LimitError::NotSchroeder);
    }
    if z.norm() >= 1.0 {
        return Err(LimitError::OutOfDomain("|z| must be below 1"));
    }
    let g = prof.gamma;
    let mut p = DiscPoint::new(z);
    let mut scale = 1.0;
    let mut prev = z - prof.q;
    let mut cur = prev;
    for _ in 0..n_iters {
        p = genfn::step(law, p);
        scale *= g;
        prev = cur;
        cur = (p.z - prof.q) / scale;
    }
    Ok(Converged {
        value: cur,
        residual: (cur - prev).norm(),
    })
}

/// `nu_k ~ gamma^{-n} P(Z_n = k)` for `k = 1..=k_max` (index `k - 1`), with
/// the change from generation `n - 1` as residual.
pub fn schroeder_coeffs(
    law: &OffspringLaw,
    k_max: u64,
    n: usize,
    policy: &ConvPolicy,
) -> Result<Vec<Converged<f64>>, LimitError> {
    let prof = classify(law);
    if !prof.is_schroeder() {
        return Err(LimitError::NotSchroeder);
    }
    let n = n.max(1);
    let pol = prefix_policy_for(law, n, k_max.max(1), 1, policy).expect("k_max >= mu^n = 1");
    let gens = iterate_generations(law, n, &pol)?;
    let lg = prof.gamma.ln();
    let (last, before) = (&gens[n], &gens[n - 1]);
    Ok((1..=k_max)
        .map(|k| {
            let v = (last.log_prob(k) - n as f64 * lg).exp();
            let w = (before.log_prob(k) - (n - 1) as f64 * lg).exp();
            Converged {
                value: v,
                residual: (v - w).abs(),
            }
        })
        .collect())
}

/// `B_n(s) = f_n(s)^{mu^{-n}}`, evaluated in the log domain.
pub fn boettcher_function(law: &OffspringLaw, s: f64, n_iters: usize) -> Result<Converged<f64>, LimitError> {
    let prof = classify(law);
    if prof.is_schroeder() {
        return Err(LimitError::NotBoettcher);
    }
    if !(s > 0.0 && s <= 1.0) {
        return Err(LimitError::OutOfDomain("s must lie in (0, 1]"));
    }
    let mu = prof.mu as f64;
    let theta = -s.ln();
    let at = |n: usize| (-neg_log_iterate(law, n, theta).t / mu.powi(n as i32)).exp();
    let v = at(n_iters);
    let residual = if n_iters > 0 { (v - at(n_iters - 1)).abs() } else { 0.0 };
    Ok(Converged { value: v, residual })
}

/// Number of divisions by `m` bringing `|a|` down to the reference size.
fn extension_depth(a: f64, m: f64) -> usize {
    let mut j = 0;
    let mut v = a.abs();
    while v > REF_ARG && j < 100_000 {
        v /= m;
        j += 1;
    }
    j
}

/// `-log phi_n(h)` and its derivatives in `h` (not in the iteration variable).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceExponent {
    /// `-log phi(h)`.
    pub value: f64,
    /// `-phi'(h) / phi(h)`, the mean of `W` tilted by `e^{-hW}`.
    pub tilted_mean: f64,
    /// Variance of the tilted `W`.
    pub tilted_var: f64,
}

pub fn laplace_exponent(law: &OffspringLaw, h: f64, norming: &NormingSequence, n: usize) -> Result<LaplaceExponent, LimitError> {
    let c_n = norming.checked(n)?;
    let m = norming.m();
    let j = extension_depth(h, m);
    let scale = c_n * m.powi(j as i32);
    let r: NegLogIterate = neg_log_iterate(law, n + j, h / scale);
    Ok(LaplaceExponent {
        value: r.t,
        tilted_mean: r.dt / scale,
        tilted_var: r.tilted_variance() / (scale * scale),
    })
}

/// `phi(h) = E e^{-hW} ~ f_n(e^{-h/c_n})`, residual against generation `n - 1`.
pub fn laplace_w(law: &OffspringLaw, h: f64, norming: &NormingSequence, n: usize) -> Result<Converged<f64>, LimitError> {
    if h < 0.0 {
        return Err(LimitError::OutOfDomain("h must be non-negative"));
    }
    let v = (-laplace_exponent(law, h, norming, n)?.value).exp();
    let residual = if n > 0 {
        (v - (-laplace_exponent(law, h, norming, n - 1)?.value).exp()).abs()
    } else {
        0.0
    };
    Ok(Converged { value: v, residual })
}

/// `psi_n(u) = f_n(e^{iu/c_n})` without the functional-equation extension.
pub fn charfn_raw(law: &OffspringLaw, u: f64, c_n: f64, n: usize) -> DiscPoint {
    genfn::iterate(law, n, DiscPoint::on_circle(u / c_n))
}

fn psi_point(law: &OffspringLaw, u: f64, c_n: f64, n: usize, m: f64) -> DiscPoint {
    let j = extension_depth(u, m);
    let v = u / m.powi(j as i32);
    genfn::iterate(law, j, charfn_raw(law, v, c_n, n))
}

/// `psi(u) = E e^{iuW}`, residual against generation `n - 1`.
pub fn charfn_w(law: &OffspringLaw, u: f64, norming: &NormingSequence, n: usize) -> Result<Converged<Complex64>, LimitError> {
    let m = norming.m();
    let v = psi_point(law, u, norming.checked(n)?, n, m).z;
    let residual = if n > 0 {
        (v - psi_point(law, u, norming.c(n - 1), n - 1, m).z).norm()
    } else {
        0.0
    };
    Ok(Converged { value: v, residual })
}

/// `max_u |psi(m u) - f(psi(u))|` for the plain approximant `psi_n`.
pub fn functional_equation_residual(law: &OffspringLaw, norming: &NormingSequence, n: usize, us: &[f64]) -> Result<f64, LimitError> {
    let c_n = norming.checked(n)?;
    let m = norming.m();
    Ok(us
        .iter()
        .map(|&u| {
            let left = charfn_raw(law, m * u, c_n, n).z;
            let right = law.pgf_complex(charfn_raw(law, u, c_n, n).z);
            (left - right).norm()
        })
        .fold(0.0, f64::max))
}

/// Layout of the inversion quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadParams {
    /// End of the first dyadic block.
    pub u0: f64,
    pub panels_per_block: usize,
    /// Integration stops after a block on which `|psi|` (and, in the Schröder
    /// case, the fitted bound `c u^{-alpha}`) stays below this.
    pub tail_tol: f64,
    pub min_blocks: usize,
    pub max_blocks: usize,
    /// Largest acceptable error estimate of a density or cdf value.
    pub error_tol: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            u0: 1.0,
            panels_per_block: 64,
            tail_tol: 1e-6,
            min_blocks: 8,
            max_blocks: 160,
            error_tol: 1e-4,
        }
    }
}

/// Density value from inversion. When the raw value falls below its error
/// estimate it is censored: `w` is set to 0 and the value is only known to
/// lie in `[0, err]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityValue {
    pub x: f64,
    pub w: f64,
    pub err: f64,
    pub censored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfValue {
    pub x: f64,
    pub value: f64,
    pub err: f64,
}

/// Cached panel fits of `psi` for repeated inversion.
#[derive(Debug, Clone)]
pub struct CharfnTable {
    density: PanelSet,
    cdf: PanelSet,
    n: usize,
    params: QuadParams,
    profile: LawProfile,
}

impl CharfnTable {
    /// Tabulates `psi_n` with `n` the norming horizon.
    pub fn new(law: &OffspringLaw, norming: &NormingSequence, params: QuadParams) -> Result<Self, LimitError> {
        let n = norming.horizon();
        let c_n = norming.c(n);
        let m = norming.m();
        let profile = classify(law);
        let mut density = PanelSet::default();
        let mut cdf = PanelSet::default();
        for block in 0..params.max_blocks {
            let mut block_max: f64 = 0.0;
            let mut fitted: f64 = 0.0;
            for (c, h) in dyadic_panels(params.u0, params.panels_per_block, block) {
                let nodes = Panel::nodes(c, h);
                let pts = nodes.map(|u| psi_point(law, u, c_n, n, m));
                for (p, &u) in pts.iter().zip(&nodes) {
                    let a = p.z.norm();
                    block_max = block_max.max(a);
                    if let Alpha::Finite(al) = profile.alpha {
                        fitted = fitted.max(a * u.powf(al));
                    }
                }
                density.panels.push(Panel::fit(c, h, pts.map(|p| p.z)));
                let g = [0, 1, 2, 3, 4].map(|i| -pts[i].one_minus / nodes[i]);
                cdf.panels.push(Panel::fit(c, h, g));
            }
            density.block_ends.push(density.panels.len());
            cdf.block_ends.push(cdf.panels.len());
            let upper = density.upper();
            let bound = match profile.alpha {
                Alpha::Finite(al) => fitted * upper.powf(-al),
                Alpha::Infinite => 0.0,
            };
            if block + 1 >= params.min_blocks && block_max < params.tail_tol && bound < params.tail_tol {
                break;
            }
        }
        Ok(Self {
            density,
            cdf,
            n,
            params,
            profile,
        })
    }

    pub fn upper(&self) -> f64 {
        self.density.upper()
    }

    pub fn generation(&self) -> usize {
        self.n
    }

    pub fn profile(&self) -> &LawProfile {
        &self.profile
    }

    /// `w(x) = (1/pi) Re int_0^inf e^{-iux} psi(u) du`.
    pub fn density(&self, x: f64) -> Result<DensityValue, LimitError> {
        if !(x > 0.0) {
            return Err(LimitError::OutOfDomain("x must be positive"));
        }
        let (v, err) = self.density.fourier(x);
        let w = v.re / PI;
        let err = err / PI;
        if err > self.params.error_tol {
            return Err(LimitError::QuadratureNotConverged { x, err });
        }
        let censored = w < err;
        Ok(DensityValue {
            x,
            w: if censored { 0.0 } else { w },
            err,
            censored,
        })
    }

    /// `P(W <= x) = 1 - (1/pi) Im int_0^inf e^{-iux} (psi(u) - 1)/u du`.
    pub fn cdf(&self, x: f64) -> Result<CdfValue, LimitError> {
        if !(x > 0.0) {
            return Err(LimitError::OutOfDomain("x must be positive"));
        }
        let (v, err) = self.cdf.fourier(x);
        let err = err / PI;
        if err > self.params.error_tol {
            return Err(LimitError::QuadratureNotConverged { x, err });
        }
        Ok(CdfValue {
            x,
            value: (1.0 - v.im / PI).clamp(0.0, 1.0),
            err,
        })
    }
}

pub fn density_w(law: &OffspringLaw, x: f64, norming: &NormingSequence, params: QuadParams) -> Result<DensityValue, LimitError> {
    CharfnTable::new(law, norming, params)?.density(x)
}

pub fn cdf_w(law: &OffspringLaw, x: f64, norming: &NormingSequence, params: QuadParams) -> Result<CdfValue, LimitError> {
    CharfnTable::new(law, norming, params)?.cdf(x)
}

/// Density values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub points: Vec<DensityValue>,
}

impl DensityTable {
    pub fn build(table: &CharfnTable, xs: &[f64]) -> Result<Self, LimitError> {
        let points = xs.iter().map(|&x| table.density(x)).collect::<Result<_, _>>()?;
        Ok(Self { points })
    }

    /// Uniform grid `x_0 + i dx`, `i < count`.
    pub fn uniform(table: &CharfnTable, x0: f64, dx: f64, count: usize) -> Result<Self, LimitError> {
        let xs: Vec<f64> = (0..count).map(|i| x0 + i as f64 * dx).collect();
        Self::build(table, &xs)
    }

    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        self.points
            .windows(2)
            .map(|p| 0.5 * (p[0].w + p[1].w) * (p[1].x - p[0].x))
            .sum()
    }

    /// Integral over `[0, x_max]`: the grid integral plus `x_0 w(x_0)` for
    /// the stub left of the first grid point.
    pub fn integral_from_zero(&self) -> f64 {
        let stub = self.points.first().map(|p| p.x * p.w).unwrap_or(0.0);
        stub + self.integral()
    }

    pub fn sup(&self) -> f64 {
        self.points.iter().map(|p| p.w).fold(0.0, f64::max)
    }
}

/// Saddlepoint approximation of `log w(x)` from the Laplace exponent:
/// `log w(x) ~ log phi(h) + h x - log(2 pi var_h) / 2` where the tilted mean
/// at `h` equals `x`. Reaches the deep left tail where inversion only
/// returns censored values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleDensity {
    pub x: f64,
    pub h: f64,
    pub log_w: f64,
    pub tilted_var: f64,
}

pub fn log_density_saddle(law: &OffspringLaw, x: f64, norming: &NormingSequence, n: usize) -> Result<SaddleDensity, LimitError> {
    let mean_at = |h: f64| laplace_exponent(law, h, norming, n).map(|e| e.tilted_mean);
    if !(x > 0.0) || x >= mean_at(0.0)? {
        return Err(LimitError::OutOfDomain("x must lie in (0, E W)"));
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while mean_at(hi)? > x {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(LimitError::RootBracketFailure(n));
        }
    }
    let mut lo = if doublings == 0 { 0.0 } else { 0.5 * hi };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid)? > x {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    let h = 0.5 * (lo + hi);
    let e = laplace_exponent(law, h, norming, n)?;
    Ok(SaddleDensity {
        x,
        h,
        log_w: -e.value + h * x - 0.5 * (2.0 * PI * e.tilted_var).ln(),
        tilted_var: e.tilted_var,
    })
}

/// Grid density with `w^{*l}` by trapezoid convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionGrid {
    pub dx: f64,
    /// `w` at `i dx`, `i = 0..`; the value at 0 is extrapolated.
    pub w: Vec<f64>,
}

impl ConvolutionGrid {
    pub fn new(table: &CharfnTable, dx: f64, x_max: f64) -> Result<Self, LimitError> {
        let count = (x_max / dx).ceil() as usize + 1;
        let mut w = Vec::with_capacity(count);
        w.push(0.0);
        for i in 1..count {
            w.push(table.density(i as f64 * dx)?.w);
        }
        if count > 2 {
            w[0] = (2.0 * w[1] - w[2]).max(0.0);
        }
        Ok(Self { dx, w })
    }

    /// Trapezoid convolution of two grid functions.
    pub fn convolve(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = a.len().min(b.len());
        let mut out = alloc::vec![0.0; n];
        for (i, slot) in out.iter_mut().enumerate().skip(1) {
            let mut s = 0.5 * (a[0] * b[i] + a[i] * b[0]);
            for j in 1..i {
                s += a[j] * b[i - j];
            }
            *slot = s * self.dx;
        }
        out
    }

    /// `w^{*1}, ..., w^{*l_max}`.
    pub fn powers(&self, l_max: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(l_max);
        out.push(self.w.clone());
        for _ in 1..l_max {
            let next = self.convolve(out.last().expect("non-empty"), &self.w);
            out.push(next);
        }
        out
    }

    /// Running trapezoid integral of `w`.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.w.len());
        out.push(0.0);
        for p in self.w.windows(2) {
            acc += 0.5 * (p[0] + p[1]) * self.dx;
            out.push(acc);
        }
        out
    }
}

/// One row of the one-generation self-similarity check
/// `w(x/m)/m = sum_l p_l w^{*l}(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfSimilarityRow {
    pub x: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub rel: f64,
}

/// `xs` are moved to the nearest grid point.
pub fn self_similarity_check(
    law: &OffspringLaw,
    table: &CharfnTable,
    grid: &ConvolutionGrid,
    xs: &[f64],
) -> Result<Vec<SelfSimilarityRow>, LimitError> {
    let m = law.mean();
    let powers = grid.powers(law.max_count() as usize);
    let mut rows = Vec::with_capacity(xs.len());
    for &x in xs {
        let i = (x / grid.dx).round() as usize;
        if i == 0 || i >= grid.w.len() {
            return Err(LimitError::OutOfDomain("x outside the convolution grid"));
        }
        let xg = i as f64 * grid.dx;
        let lhs = table.density(xg / m)?.w / m;
        let rhs: f64 = law.support().map(|(l, p)| p * powers[l as usize - 1][i]).sum();
        rows.push(SelfSimilarityRow {
            x: xg,
            lhs,
            rhs,
            rel: (lhs - rhs).abs() / lhs.abs().max(rhs.abs()),
        });
    }
    Ok(rows)
}

/// Outcome of the density sup and convolution-power bound checks.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityBoundReport {
    pub sup: f64,
    /// Median of the top decile of grid values.
    pub top_decile_median: f64,
    pub ell0: u64,
    /// `A = sup w^{*l0}`.
    pub a: f64,
    /// `(x, w^{*(l0+1)}(x), A F(x))` at the requested points.
    pub rows: Vec<(f64, f64, f64)>,
}

impl DensityBoundReport {
    pub fn holds(&self) -> bool {
        self.sup < 10.0 * self.top_decile_median && self.rows.iter().all(|r| r.1 <= r.2 * (1.0 + 1e-9))
    }
}

/// Checks `sup w < inf` on the grid and `w^{*l}(x) <= A F(x)^{l - l0}` at
/// `l = l0 + 1`.
pub fn density_bound_check(law: &OffspringLaw, grid: &ConvolutionGrid, xs: &[f64]) -> Result<DensityBoundReport, LimitError> {
    let prof = classify(law);
    let ell0 = prof.alpha.ell0();
    let mut sorted = grid.w.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    let top = &sorted[..(sorted.len() / 10).max(1)];
    let top_decile_median = top[top.len() / 2];
    let powers = grid.powers(ell0 as usize + 1);
    let a = powers[ell0 as usize - 1].iter().copied().fold(0.0, f64::max);
    let cdf = grid.cdf();
    let mut rows = Vec::with_capacity(xs.len());
    for &x in xs {
        let i = (x / grid.dx).round() as usize;
        if i >= grid.w.len() {
            return Err(LimitError::OutOfDomain("x outside the convolution grid"));
        }
        rows.push((i as f64 * grid.dx, powers[ell0 as usize][i], a * cdf[i]));
    }
    Ok(DensityBoundReport {
        sup: sorted[0],
        top_decile_median,
        ell0,
        a,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo() -> OffspringLaw {
        OffspringLaw::truncated_geometric(2.0, 1e-15).unwrap()
    }

    fn b23() -> OffspringLaw {
        OffspringLaw::validate(&[(2, 0.5), (3, 0.5)]).unwrap()
    }

    #[test]
    fn power_and_seneta_norming() {
        let c = norming(&geo(), 4, NormingMode::Power).unwrap();
        for (n, &v) in c.values().iter().enumerate() {
            assert!((v - 2f64.powi(n as i32)).abs() < 1e-12 * v);
        }
        let s = norming(&geo(), 30, NormingMode::Seneta).unwrap();
        assert!((s.c(0) - 1.0).abs() < 1e-13);
        let want = 1.0 / ((core::f64::consts::E + 1.0) / 2.0).ln();
        assert!((s.c(1) - want).abs() < 1e-12 * want);
        for seq in [&c, &s] {
            for w in seq.values().windows(2) {
                assert!(w[0] < w[1] && w[1] <= 2.0 * w[0] * (1.0 + 1e-12));
            }
        }
        // c_n / m^n settles
        let r: Vec<f64> = (0..=30).map(|n| s.c(n) / 2f64.powi(n as i32)).collect();
        for n in 6..30 {
            assert!((r[n + 1] - r[n]).abs() <= (r[n] - r[n - 1]).abs() + 1e-15);
        }
    }

    #[test]
    fn schroeder_function_geometric() {
        let law = geo();
        let v = schroeder_function(&law, Complex64::new(0.5, 0.0), 50).unwrap();
        assert!((v.value.re - 1.0).abs() < 1e-10 && v.residual < 1e-10);
        assert_eq!(schroeder_function(&law, Complex64::new(0.0, 0.0), 10).unwrap().value.norm(), 0.0);
        let eps = 1e-6;
        let d = schroeder_function(&law, Complex64::new(eps, 0.0), 50).unwrap().value.re / eps;
        assert!((d - 1.0).abs() < 1e-4);
        assert_eq!(schroeder_function(&b23(), Complex64::new(0.5, 0.0), 5), Err(LimitError::NotSchroeder));
    }

    #[test]
    fn schroeder_coefficients_geometric() {
        let nu = schroeder_coeffs(&geo(), 60, 30, &ConvPolicy::default()).unwrap();
        for k in 0..3 {
            assert!((nu[k].value - 1.0).abs() < 1e-6);
        }
        let s = 0.3;
        let series: f64 = nu.iter().enumerate().map(|(i, c)| c.value * s.powi(i as i32 + 1)).sum();
        assert!((series - s / (1.0 - s)).abs() < 1e-8);
        // lattice-off coefficients vanish
        let law = OffspringLaw::validate(&[(1, 0.5), (3, 0.5)]).unwrap();
        let nu = schroeder_coeffs(&law, 10, 6, &ConvPolicy::default()).unwrap();
        assert_eq!(nu[1].value, 0.0);
        assert!(nu[2].value > 0.0);
    }

    #[test]
    fn boettcher_function_properties() {
        let law = b23();
        assert!((boettcher_function(&law, 1.0, 30).unwrap().value - 1.0).abs() < 1e-15);
        let s = 0.7;
        let b = boettcher_function(&law, s, 40).unwrap();
        let bf = boettcher_function(&law, law.pgf(s), 40).unwrap();
        assert!((bf.value - b.value * b.value).abs() < 1e-9);
        let lo = boettcher_function(&law, 0.4, 40).unwrap().value;
        let hi = boettcher_function(&law, 0.6, 40).unwrap().value;
        assert!(lo < hi);
        assert_eq!(boettcher_function(&geo(), 0.5, 5), Err(LimitError::NotBoettcher));
    }

    #[test]
    fn laplace_and_charfn_geometric() {
        let law = geo();
        let c = norming(&law, 40, NormingMode::Power).unwrap();
        assert_eq!(laplace_w(&law, 0.0, &c, 40).unwrap().value, 1.0);
        let v = laplace_w(&law, 1.0, &c, 40).unwrap();
        assert!((v.value - 0.5).abs() < 1e-8);
        let mut last = 1.0;
        for h in [0.5, 1.0, 2.0, 10.0, 100.0] {
            let v = laplace_w(&law, h, &c, 40).unwrap().value;
            assert!(v < last);
            assert!((v - 1.0 / (1.0 + h)).abs() < 1e-8);
            last = v;
        }
        let p = charfn_w(&law, 1.0, &c, 40).unwrap().value;
        assert!((p - Complex64::new(0.5, 0.5)).norm() < 1e-6);
        assert_eq!(charfn_w(&law, 0.0, &c, 40).unwrap().value, Complex64::new(1.0, 0.0));
        let q = charfn_w(&law, -1.0, &c, 40).unwrap().value;
        assert!((q - p.conj()).norm() < 1e-15);
        for u in [10.0, 1e3, 1e6] {
            let p = charfn_w(&law, u, &c, 40).unwrap().value;
            let want = Complex64::new(1.0, 0.0) / Complex64::new(1.0, -u);
            assert!((p - want).norm() < 1e-9 * want.norm(), "u={u}");
        }
        let r = functional_equation_residual(&law, &c, 30, &[0.1, 0.5, 1.0, 2.0, 5.0]).unwrap();
        assert!(r < 1e-6);
    }

    #[test]
    fn density_and_cdf_geometric() {
        let law = geo();
        let c = norming(&law, 40, NormingMode::Power).unwrap();
        let t = CharfnTable::new(&law, &c, QuadParams::default()).unwrap();
        let w = t.density(1.0).unwrap();
        assert!((w.w - (-1.0f64).exp()).abs() < 1e-4, "{w:?}");
        let f = t.cdf(1.0).unwrap();
        assert!((f.value - (1.0 - (-1.0f64).exp())).abs() < 1e-4, "{f:?}");
        assert!(t.cdf(1e-3).unwrap().value < 0.01);
        let mut last = 0.0;
        for x in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0] {
            let w = t.density(x).unwrap();
            assert!(w.w >= 0.0 && (w.w - (-x as f64).exp()).abs() < 1e-4, "x={x}");
            let v = t.cdf(x).unwrap().value;
            assert!(v > last);
            last = v;
        }
        let dt = DensityTable::uniform(&t, 1e-3, 0.01, 2000).unwrap();
        let exact = (-1e-3f64).exp() - (-dt.points.last().unwrap().x).exp();
        assert!((dt.integral() - exact).abs() < 5e-4, "{}", dt.integral());
        assert!((dt.integral_from_zero() - 1.0).abs() < 5e-4);
    }

    #[test]
    fn boettcher_density_and_saddle() {
        let law = b23();
        let c = norming(&law, 40, NormingMode::Power).unwrap();
        let t = CharfnTable::new(&law, &c, QuadParams::default()).unwrap();
        let dt = DensityTable::uniform(&t, 0.01, 0.01, 600).unwrap();
        assert!((dt.integral_from_zero() - 1.0).abs() < 5e-4, "{}", dt.integral_from_zero());
        assert!(dt.points.iter().all(|p| p.w >= 0.0));
        // saddlepoint and inversion agree where the density is not tiny
        for x in [0.5, 0.8] {
            let inv = t.density(x).unwrap().w;
            let sp = log_density_saddle(&law, x, &c, 40).unwrap().log_w.exp();
            assert!((sp / inv - 1.0).abs() < 0.1, "x={x} {sp} {inv}");
        }
        let deep = log_density_saddle(&law, 0.05, &c, 40).unwrap();
        assert!(deep.log_w < -1000.0);
        let cens = t.density(0.05).unwrap();
        assert!(cens.censored && cens.w == 0.0);
    }

    #[test]
    fn self_similarity_one_generation() {
        for law in [geo(), b23()] {
            let c = norming(&law, 40, NormingMode::Power).unwrap();
            let t = CharfnTable::new(&law, &c, QuadParams::default()).unwrap();
            let grid = ConvolutionGrid::new(&t, 0.005, 2.5).unwrap();
            let rows = self_similarity_check(&law, &t, &grid, &[0.5, 1.0, 1.5, 2.0]).unwrap();
            for r in rows {
                if r.lhs > 1e-4 {
                    assert!(r.rel < 5e-3, "{r:?}");
                }
            }
        }
    }

    #[test]
    fn density_bounds_boettcher() {
        let law = b23();
        let c = norming(&law, 40, NormingMode::Power).unwrap();
        let t = CharfnTable::new(&law, &c, QuadParams::default()).unwrap();
        let grid = ConvolutionGrid::new(&t, 0.01, 4.0).unwrap();
        let rep = density_bound_check(&law, &grid, &[0.2, 0.5]).unwrap();
        assert_eq!(rep.ell0, 1);
        assert!(rep.holds(), "{rep:?}");
    }
}
