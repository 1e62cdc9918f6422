//! Lower-deviation asymptotics of `P(Z_n = k_n)` and `P(Z_n <= k_n)`.
//!
//! Schröder case: `P(Z_n = k) ~ d / (m^{n-a} c_a) w(k / (m^{n-a} c_a))` with
//! `a = min{l >= 1 : c_l >= k}`. Böttcher case: `mu^{b-n} log(c_n P(Z_n = k))`
//! stays in a negative band, with `b = min{l : c_l mu^{n-l} >= 2k}`.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use num_traits::Float;

use crate::exactdist::{iterate_pmf, prefix_policy_for};
use crate::limits::{CharfnTable, LimitError, NormingMode, NormingSequence};
use crate::offspring::{classify, LawProfile, OffspringLaw};
use crate::pmf::{ConvPolicy, Pmf, PmfError};

/// Rows whose exact value carries at least this much unaccounted mass are flagged.
pub const DEFECT_FLAG: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeviationError {
    #[error("k = {k} exceeds the largest norming constant {c_max}")]
    BeyondNorming { k: f64, c_max: f64 },
    #[error("no index up to the norming horizon qualifies for n = {n}, k = {k}")]
    NoSuchIndex { n: usize, k: u64 },
    #[error("k = {k} is off the lattice {residue} mod {span}")]
    LatticeMismatch { k: u64, span: u64, residue: u64 },
    #[error("the law is not of Schröder type")]
    NotSchroeder,
    #[error("the law is not of Böttcher type")]
    NotBoettcher,
    #[error("precondition violated: {0}")]
    Precondition(&'static str),
    #[error("w({x}) is below the inversion error {err:e}; no prediction is made")]
    Censored { x: f64, err: f64 },
    #[error(transparent)]
    Pmf(#[from] PmfError),
    #[error(transparent)]
    Limit(#[from] LimitError),
}

/// `min{l >= 1 : c_l >= k}`.
pub fn a_index(norming: &NormingSequence, k: f64) -> Result<usize, DeviationError> {
    let c = norming.values();
    (1..c.len()).find(|&l| c[l] >= k).ok_or(DeviationError::BeyondNorming {
        k,
        c_max: c[c.len() - 1],
    })
}

/// `min{l : c_l mu^{n-l} >= 2k}`, searched up to the norming horizon.
///
/// With `k` far above `mu^n` the minimum can exceed `n`; `mu^{n-l}` is then a
/// negative power and the sandwich `2k <= c_b mu^{n-b} <= 2k m / mu` still holds.
pub fn b_index(norming: &NormingSequence, profile: &LawProfile, n: usize, k: u64) -> Result<usize, DeviationError> {
    if profile.is_schroeder() {
        return Err(DeviationError::NotBoettcher);
    }
    let mu = profile.mu as f64;
    if (k as f64) < mu.powi(n as i32) {
        return Err(DeviationError::Precondition("b_index needs k >= mu^n"));
    }
    let target = 2.0 * k as f64;
    let c = norming.values();
    (0..c.len())
        .find(|&l| c[l] * mu.powi(n as i32 - l as i32) >= target)
        .ok_or(DeviationError::NoSuchIndex { n, k })
}

fn lattice_of(law: &OffspringLaw, n: usize) -> (u64, u64) {
    let p = classify(law);
    let mut r = 1u64;
    for _ in 0..n {
        r = (r * (p.mu % p.d)) % p.d;
    }
    (p.d, r % p.d)
}

fn check_lattice(law: &OffspringLaw, n: usize, k: u64) -> Result<(), DeviationError> {
    let (span, residue) = lattice_of(law, n);
    if k % span != residue {
        return Err(DeviationError::LatticeMismatch { k, span, residue });
    }
    Ok(())
}

/// Smallest lattice point of `Z_n` at or above `raw`.
pub fn round_to_lattice(law: &OffspringLaw, n: usize, raw: f64) -> u64 {
    let (span, residue) = lattice_of(law, n);
    // guard against 2^{j} landing a hair above an integer
    let base = (raw * (1.0 - 1e-12)).ceil().max(1.0) as u64;
    let off = (residue + span - base % span) % span;
    base + off
}

/// `m^{n-a} c_a`, the effective scale of `Z_n` near `k`.
fn effective_scale(norming: &NormingSequence, n: usize, k: f64) -> Result<(usize, f64), DeviationError> {
    let a = a_index(norming, k)?;
    Ok((a, norming.m().powi(n as i32 - a as i32) * norming.c(a)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub a: usize,
    pub x: f64,
    pub value: f64,
}

/// Predicted `P(Z_n = k)` with `w` taken from `table`.
pub fn schroeder_predict(
    law: &OffspringLaw,
    table: &CharfnTable,
    norming: &NormingSequence,
    n: usize,
    k: u64,
) -> Result<Prediction, DeviationError> {
    let p = table.profile();
    if !p.is_schroeder() {
        return Err(DeviationError::NotSchroeder);
    }
    if k == 0 {
        return Err(DeviationError::Precondition("k must be positive"));
    }
    check_lattice(law, n, k)?;
    let (a, scale) = effective_scale(norming, n, k as f64)?;
    let x = k as f64 / scale;
    let w = table.density(x)?;
    if w.censored {
        return Err(DeviationError::Censored { x, err: w.err });
    }
    Ok(Prediction {
        a,
        x,
        value: p.d as f64 / scale * w.w,
    })
}

/// Predicted `P(0 < Z_n <= k)`.
pub fn schroeder_predict_cdf(
    table: &CharfnTable,
    norming: &NormingSequence,
    n: usize,
    k: u64,
) -> Result<Prediction, DeviationError> {
    if !table.profile().is_schroeder() {
        return Err(DeviationError::NotSchroeder);
    }
    if k == 0 {
        return Err(DeviationError::Precondition("k must be positive"));
    }
    let (a, scale) = effective_scale(norming, n, k as f64)?;
    let x = k as f64 / scale;
    Ok(Prediction {
        a,
        x,
        value: table.cdf(x)?.value,
    })
}

/// How `k_n` is chosen for generation `n`; every choice is moved up to the lattice.
#[derive(Debug, Clone, PartialEq)]
pub enum KSchedule {
    /// `c_n^rho`.
    NormingPower { rho: f64 },
    /// `x c_n`.
    NormingMultiple { x: f64 },
    /// `n mu^n`.
    GenerationTimesMinimal,
    /// Fixed `(n, k)` pairs.
    Explicit(Vec<(usize, u64)>),
}

impl KSchedule {
    pub fn k_for(&self, law: &OffspringLaw, norming: &NormingSequence, n: usize) -> Option<u64> {
        let raw = match self {
            KSchedule::NormingPower { rho } => norming.get(n)?.powf(*rho),
            KSchedule::NormingMultiple { x } => x * norming.get(n)?,
            KSchedule::GenerationTimesMinimal => n as f64 * (law.min_count() as f64).powi(n as i32),
            KSchedule::Explicit(pairs) => return pairs.iter().find(|p| p.0 == n).map(|p| p.1),
        };
        Some(round_to_lattice(law, n, raw))
    }

    pub fn describe(&self) -> String {
        match self {
            KSchedule::NormingPower { rho } => alloc::format!("k_n = c_n^{rho} (lattice, upward)"),
            KSchedule::NormingMultiple { x } => alloc::format!("k_n = {x} c_n (lattice, upward)"),
            KSchedule::GenerationTimesMinimal => String::from("k_n = n mu^n (lattice, upward)"),
            KSchedule::Explicit(p) => alloc::format!("explicit, {} points", p.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// `P(Z_n = k)`.
    Point,
    /// `P(Z_n <= k)`.
    Cdf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationRow {
    pub n: usize,
    pub k: u64,
    pub exact_log: f64,
    /// Predicted log-probability, or the Böttcher functional.
    pub predicted: f64,
    /// `exact / predicted`, or the Böttcher functional again.
    pub value: f64,
    /// `a_n` or `b_n`.
    pub index: usize,
    /// Mass the exact value could be missing.
    pub defect: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub rows: Vec<DeviationRow>,
    pub profile: LawProfile,
    pub norming: NormingMode,
    pub schedule: String,
    pub quantity: Quantity,
}

impl DeviationReport {
    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }
}

/// Exact `log P(Z_n = k)` and `log P(Z_n <= k)` on the left-exact window ending
/// at `k`, with the defect that can affect them.
///
/// Everything to the right of `k` is discarded without touching the values at
/// or below `k`, so only flagged entries make the result doubtful.
pub fn exact_at(law: &OffspringLaw, n: usize, k: u64, policy: &ConvPolicy) -> Result<(f64, f64, f64), DeviationError> {
    let Some(pol) = prefix_policy_for(law, n, k, 1, policy) else {
        return Ok((f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0));
    };
    let pmf: Pmf = iterate_pmf(law, n, 1, &pol)?;
    let upto = ((k - pmf.lo()) / pmf.span()) as usize;
    let doubtful = (0..=upto.min(pmf.len() - 1)).any(|i| pmf.is_unreliable(i));
    Ok((pmf.log_prob(k), pmf.log_cdf(k), if doubtful { 1.0 } else { 0.0 }))
}

fn flag(defect: f64, exact: f64) -> bool {
    defect >= DEFECT_FLAG || !exact.is_finite()
}

/// Ratios of exact to predicted values along the schedule.
pub fn schroeder_ratio_table(
    law: &OffspringLaw,
    table: &CharfnTable,
    norming: &NormingSequence,
    schedule: &KSchedule,
    n_range: RangeInclusive<usize>,
    quantity: Quantity,
    policy: &ConvPolicy,
) -> Result<DeviationReport, DeviationError> {
    let mut rows = Vec::new();
    for n in n_range {
        let k = schedule
            .k_for(law, norming, n)
            .ok_or(DeviationError::Precondition("schedule has no k for this n"))?;
        if k as f64 >= norming.checked(n)? {
            return Err(DeviationError::Precondition("k_n must stay below c_n"));
        }
        let (point, cdf, defect) = exact_at(law, n, k, policy)?;
        let (exact_log, pred) = match quantity {
            Quantity::Point => (point, schroeder_predict(law, table, norming, n, k)?),
            Quantity::Cdf => (cdf, schroeder_predict_cdf(table, norming, n, k)?),
        };
        let predicted = pred.value.ln();
        rows.push(DeviationRow {
            n,
            k,
            exact_log,
            predicted,
            value: (exact_log - predicted).exp(),
            index: pred.a,
            defect,
            flagged: flag(defect, exact_log),
        });
    }
    Ok(DeviationReport {
        rows,
        profile: classify(law),
        norming: norming.mode(),
        schedule: schedule.describe(),
        quantity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoettcherValue {
    pub b: usize,
    /// `mu^{b-n} (log c_n + log P(Z_n = k))`.
    pub point: f64,
    /// `mu^{b-n} log P(Z_n <= k)`.
    pub cdf: f64,
    pub exact_point: f64,
    pub exact_cdf: f64,
    pub defect: f64,
}

pub fn boettcher_log_ratio(
    law: &OffspringLaw,
    norming: &NormingSequence,
    n: usize,
    k: u64,
    policy: &ConvPolicy,
) -> Result<BoettcherValue, DeviationError> {
    let profile = classify(law);
    check_lattice(law, n, k)?;
    let b = b_index(norming, &profile, n, k)?;
    let c_n = norming.checked(n)?;
    let (exact_point, exact_cdf, defect) = exact_at(law, n, k, policy)?;
    let scale = (profile.mu as f64).powi(b as i32 - n as i32);
    Ok(BoettcherValue {
        b,
        point: scale * (c_n.ln() + exact_point),
        cdf: scale * exact_cdf,
        exact_point,
        exact_cdf,
        defect,
    })
}

/// Böttcher functional along a schedule; `value` holds the normalized log.
pub fn boettcher_table(
    law: &OffspringLaw,
    norming: &NormingSequence,
    schedule: &KSchedule,
    n_range: RangeInclusive<usize>,
    quantity: Quantity,
    policy: &ConvPolicy,
) -> Result<DeviationReport, DeviationError> {
    let mut rows = Vec::new();
    for n in n_range {
        let k = schedule
            .k_for(law, norming, n)
            .ok_or(DeviationError::Precondition("schedule has no k for this n"))?;
        let v = boettcher_log_ratio(law, norming, n, k, policy)?;
        let (exact_log, value) = match quantity {
            Quantity::Point => (v.exact_point, v.point),
            Quantity::Cdf => (v.exact_cdf, v.cdf),
        };
        rows.push(DeviationRow {
            n,
            k,
            exact_log,
            predicted: value,
            value,
            index: v.b,
            defect: v.defect,
            flagged: flag(v.defect, exact_log),
        });
    }
    Ok(DeviationReport {
        rows,
        profile: classify(law),
        norming: norming.mode(),
        schedule: schedule.describe(),
        quantity,
    })
}

/// `log P(Z_n = mu^n) = (1 + mu + ... + mu^{n-1}) log p_mu`.
pub fn minimal_point_logprob(law: &OffspringLaw, n: usize) -> f64 {
    let mu = law.min_count();
    let count = if mu == 1 {
        n as f64
    } else {
        let muf = mu as f64;
        (muf.powi(n as i32) - 1.0) / (muf - 1.0)
    };
    if count == 0.0 {
        0.0
    } else {
        count * law.prob(mu).ln()
    }
}

/// `(n, P(Z_n = mu^n + k) / (mu^{nk} P(Z_n = mu^n)))`.
pub fn neighbor_ratio_report(
    law: &OffspringLaw,
    n_range: RangeInclusive<usize>,
    k_offset: u64,
    policy: &ConvPolicy,
) -> Result<Vec<(usize, f64)>, DeviationError> {
    let mu = law.min_count();
    n_range
        .map(|n| {
            let base = mu.pow(n as u32);
            let pol = prefix_policy_for(law, n, base + k_offset, 1, policy)
                .ok_or(DeviationError::Precondition("minimal point overflows"))?;
            let pmf = iterate_pmf(law, n, 1, &pol)?;
            let log_ratio = pmf.log_prob(base + k_offset)
                - pmf.log_prob(base)
                - (n as f64 * k_offset as f64) * (mu as f64).ln();
            Ok((n, log_ratio.exp()))
        })
        .collect()
}

/// Successive differences of the ratios shrink, up to rounding noise.
pub fn stabilizes(rows: &[(usize, f64)]) -> bool {
    let diffs: Vec<f64> = rows.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
    diffs.windows(2).all(|w| w[1] <= w[0] || w[1] < 1e-12)
}

/// `(n, mu^{-n} log P(Z_n = mu^n + k))`.
pub fn log_scale_limit_check(
    law: &OffspringLaw,
    n_range: RangeInclusive<usize>,
    k_offset: u64,
    policy: &ConvPolicy,
) -> Result<Vec<(usize, f64)>, DeviationError> {
    let mu = law.min_count();
    n_range
        .map(|n| {
            let base = mu.pow(n as u32);
            let (lp, _, _) = exact_at(law, n, base + k_offset, policy)?;
            Ok((n, lp / (mu as f64).powi(n as i32)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::{norming, QuadParams};

    fn geo() -> OffspringLaw {
        OffspringLaw::truncated_geometric(2.0, 1e-15).unwrap()
    }

    fn b23() -> OffspringLaw {
        OffspringLaw::validate(&[(2, 0.5), (3, 0.5)]).unwrap()
    }

    #[test]
    fn indices() {
        let law = b23();
        let nm = norming(&law, 20, NormingMode::Power).unwrap();
        let p = classify(&law);
        assert_eq!(b_index(&nm, &p, 10, 1024).unwrap(), 4);
        let geo_nm = norming(&geo(), 10, NormingMode::Power).unwrap();
        assert_eq!(a_index(&geo_nm, 5.0).unwrap(), 3);
        assert_eq!(a_index(&geo_nm, 1.0).unwrap(), 1);
        assert!(matches!(a_index(&geo_nm, 5000.0), Err(DeviationError::BeyondNorming { .. })));
        let mut state = 12345u64;
        for _ in 0..20 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let n = 1 + (state >> 33) as usize % 8;
            let lo = 1u64 << n;
            let k = lo + (state >> 40) % (4 * lo);
            let b = b_index(&nm, &p, n, k).unwrap();
            let v = nm.c(b) * 2f64.powi(n as i32 - b as i32);
            assert!(v >= 2.0 * k as f64 && v <= 2.0 * k as f64 * 1.25 * (1.0 + 1e-12), "n={n} k={k} b={b}");
            if k > lo {
                assert!(b_index(&nm, &p, n, k - 1).unwrap() <= b);
            }
        }
        for k in 1..200u64 {
            assert!(a_index(&geo_nm, k as f64).unwrap() <= a_index(&geo_nm, (k + 1) as f64).unwrap());
        }
    }

    #[test]
    fn minimal_points() {
        let law = b23();
        assert!((minimal_point_logprob(&law, 2) - (0.125f64).ln()).abs() < 1e-14);
        assert_eq!(minimal_point_logprob(&law, 0), 0.0);
        assert!((minimal_point_logprob(&law, 1) - 0.5f64.ln()).abs() < 1e-15);
        let pol = ConvPolicy::default();
        let r = neighbor_ratio_report(&law, 0..=1, 0, &pol).unwrap();
        assert!(r.iter().all(|&(_, v)| (v - 1.0).abs() < 1e-12));
        let r = neighbor_ratio_report(&law, 1..=8, 1, &pol).unwrap();
        assert!((r[0].1 - 0.5).abs() < 1e-12);
        assert!(stabilizes(&r), "{r:?}");
        let r2 = neighbor_ratio_report(&law, 2..=8, 2, &pol).unwrap();
        assert!(stabilizes(&r2), "{r2:?}");
        let ls = log_scale_limit_check(&law, 1..=8, 0, &pol).unwrap();
        let l2 = 0.5f64.ln();
        assert!((ls[7].1 / l2 - 1.0).abs() < 0.01);
        let ls1 = log_scale_limit_check(&law, 8..=8, 1, &pol).unwrap();
        assert!((ls1[0].1 / l2 - 1.0).abs() < 0.05 && ls1[0].1 < 0.0);
    }

    #[test]
    fn schroeder_predictions() {
        let law = geo();
        let nm = norming(&law, 16, NormingMode::Power).unwrap();
        let table = CharfnTable::new(&law, &nm, QuadParams::default()).unwrap();
        let p = schroeder_predict(&law, &table, &nm, 16, 256).unwrap();
        let want = 2f64.powi(-16) * (-1.0f64 / 256.0).exp();
        assert_eq!(nm.m().powi(16 - p.a as i32) * nm.c(p.a), nm.c(16));
        assert!((p.value / want - 1.0).abs() < 1e-3, "{} {want}", p.value);
        let c = schroeder_predict_cdf(&table, &nm, 16, 256).unwrap();
        assert!((c.value - 0.0038986).abs() < 1e-5, "{}", c.value);
        let c2 = schroeder_predict_cdf(&table, &nm, 16, 512).unwrap();
        assert!(c2.value > c.value && c2.value <= 1.0);
        let sched = KSchedule::NormingPower { rho: 0.5 };
        let rep = schroeder_ratio_table(&law, &table, &nm, &sched, 10..=16, Quantity::Point, &ConvPolicy::default())
            .unwrap();
        assert!(rep.rows.iter().all(|r| !r.flagged));
        assert!((rep.rows.last().unwrap().value - 1.0).abs() < 0.05, "{rep:?}");
        let edge = KSchedule::NormingPower { rho: 1.0 };
        assert!(schroeder_ratio_table(&law, &table, &nm, &edge, 10..=10, Quantity::Point, &ConvPolicy::default())
            .is_err());
    }

    #[test]
    fn lattice_rules() {
        let law = OffspringLaw::validate(&[(1, 0.4), (3, 0.6)]).unwrap();
        assert_eq!(round_to_lattice(&law, 3, 10.0), 11);
        assert_eq!(round_to_lattice(&law, 3, 11.0), 11);
        let nm = norming(&law, 8, NormingMode::Power).unwrap();
        let table = CharfnTable::new(&law, &nm, QuadParams::default()).unwrap();
        assert!(matches!(
            schroeder_predict(&law, &table, &nm, 3, 10),
            Err(DeviationError::LatticeMismatch { .. })
        ));
        assert_eq!(round_to_lattice(&geo(), 5, 1024.0000000001), 1024);
    }

    #[test]
    fn boettcher_functional() {
        let law = b23();
        let nm = norming(&law, 20, NormingMode::Power).unwrap();
        let pol = ConvPolicy::default();
        let v = boettcher_log_ratio(&law, &nm, 4, 16, &pol).unwrap();
        let scale = 2f64.powi(v.b as i32 - 4);
        let want = scale * (4.0 * 2.5f64.ln() + 15.0 * 0.5f64.ln());
        assert!((v.point - want).abs() < 1e-9 * want.abs());
        assert!(v.point < 0.0);
    }
}
