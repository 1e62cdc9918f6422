//! Exact law of `Z_n` by composition at the root, plus a Monte Carlo sampler.
//!
//! One generation step is `P(Z_{k+1} = i) = sum_j p_j P(Z_k^{*j} = i)`: the
//! first generation splits into `j` independent subtrees of depth `k`. The
//! convolution powers are built incrementally, `g_j = g_{j-1} * pmf_k`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Float;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::genfn;
use crate::math::{log_add, log_sum_exp};
use crate::offspring::{classify, OffspringLaw};
use crate::pmf::{convolve, convolve_power, floor_flags, trim_right_tail, ConvPolicy, OverflowRule, Pmf, PmfError};

/// Law of `Z_n` given `Z_0 = z0` under the window policy.
pub fn iterate_pmf(
    law: &OffspringLaw,
    n: usize,
    z0: u64,
    policy: &ConvPolicy,
) -> Result<Pmf, PmfError> {
    let gens = iterate_generations(law, n, policy)?;
    let last = gens.into_iter().next_back().expect("n + 1 generations");
    if z0 == 1 {
        Ok(last)
    } else {
        convolve_power(&last, z0.max(1), policy)
    }
}

/// Laws of `Z_0, ..., Z_n` from `Z_0 = 1`.
pub fn iterate_generations(
    law: &OffspringLaw,
    n: usize,
    policy: &ConvPolicy,
) -> Result<Vec<Pmf>, PmfError> {
    policy.validate()?;
    if policy.overflow == OverflowRule::Error && (policy.window_cap as u64) < law.max_count() {
        return Err(PmfError::InvalidPolicy(
            "window_cap must be at least the maximal offspring count",
        ));
    }
    let d = classify(law).d;
    if prefers_leaf_composition(law, n, d, policy) {
        return leaf_generations(law, n, d, policy);
    }
    let mut gens = Vec::with_capacity(n + 1);
    gens.push(Pmf::point_mass(1, d));
    for _ in 0..n {
        let next = next_generation(law, gens.last().expect("non-empty"), d, policy)?;
        gens.push(next);
    }
    Ok(gens)
}

fn next_generation(
    law: &OffspringLaw,
    prev: &Pmf,
    d: u64,
    policy: &ConvPolicy,
) -> Result<Pmf, PmfError> {
    let lo = law.min_count() * prev.lo();
    let cap = policy.window_cap;
    // powers only need the part that lands inside the output window
    let mut inner = ConvPolicy {
        overflow: OverflowRule::Truncate,
        ..*policy
    };
    let mut acc: Vec<f64> = Vec::new();
    let mut flagged = false;
    let mut power = prev.clone();
    let log_prev_mass = prev.log_total_mass();
    let mut mix = Vec::new();
    let max = law.max_count();
    let mut j = 1u64;
    loop {
        let lp = law.log_prob(j);
        if lp > f64::NEG_INFINITY {
            mix.push(lp + j as f64 * log_prev_mass);
            let off = ((power.lo() - lo) / d) as usize;
            let w = power.log_weights();
            let end = (off + w.len()).min(cap);
            if end > acc.len() {
                acc.resize(end, f64::NEG_INFINITY);
            }
            for (slot, &l) in acc[off..end].iter_mut().zip(w) {
                *slot = log_add(*slot, lp + l);
            }
            flagged |= power.has_unreliable();
        }
        if j == max {
            break;
        }
        let next_lo = power.lo() + prev.lo();
        let next_off = (next_lo.saturating_sub(lo) / d) as usize;
        if next_off >= cap {
            // every higher power starts beyond the window
            for (k, _) in law.support().filter(|&(k, _)| k > j) {
                mix.push(law.log_prob(k) + k as f64 * log_prev_mass);
            }
            break;
        }
        // powers below the minimal count start left of the window
        inner.window_cap = cap - next_off + (lo.saturating_sub(next_lo) / d) as usize;
        power = convolve(&power, prev, &inner)?;
        if policy.overflow == OverflowRule::Error {
            // a trim of g_j is inherited by every later power, so the budget is split
            trim_right_tail(&mut power, policy.tail_tol / (2 * max) as f64);
        }
        j += 1;
    }
    let mut out = Pmf::from_log(lo, d, acc, 0.0);
    if flagged {
        out.set_unreliable(floor_flags(out.log_weights(), policy.fft_floor));
    }
    if policy.overflow == OverflowRule::Error {
        let produced = log_sum_exp(&mix);
        let kept = out.log_total_mass();
        let lost = (produced.exp() * -(kept - produced).min(0.0).exp_m1()).max(0.0);
        if lost > policy.tail_tol {
            return Err(PmfError::WindowOverflow {
                natural: cap + 1,
                cap,
                lost,
            });
        }
        trim_right_tail(&mut out, policy.tail_tol - lost);
    }
    let complement = -out.log_total_mass().exp_m1();
    out.set_tail_defect(complement.clamp(0.0, 1.0));
    Ok(out)
}

/// Rough operation counts: composing at the root costs about `n J N^2 / 2`
/// for `J` support points and window `N`; composing at the leaves costs
/// `N^3 / 6` for the offspring powers plus `n N^2`.
fn prefers_leaf_composition(law: &OffspringLaw, n: usize, d: u64, policy: &ConvPolicy) -> bool {
    if policy.overflow != OverflowRule::Truncate || n < 2 {
        return false;
    }
    let j = ((law.max_count() - law.min_count()) / d + 1) as f64;
    let cap = policy.window_cap as f64;
    let n = n as f64;
    cap / 6.0 + n < n * j / 2.0
}

/// `Z_g = sum_k P(Z_{g-1} = k) X^{*k}` with the offspring powers `X^{*k}`
/// computed once and shared by every generation.
fn leaf_generations(
    law: &OffspringLaw,
    n: usize,
    d: u64,
    policy: &ConvPolicy,
) -> Result<Vec<Pmf>, PmfError> {
    let mu = law.min_count();
    let cap = policy.window_cap as u64;
    let lo_of = |g: usize| mu.pow(g as u32);
    // highest lattice point any stored generation can reach
    let top = lo_of(n) + (cap - 1) * d;
    let offspring: Vec<f64> = (0..=(law.max_count() - mu) / d).map(|i| law.log_prob(mu + i * d)).collect();
    let base = Pmf::from_log(mu, d, offspring, 0.0);
    let k_max = lo_of(n - 1) + (cap - 1) * d;
    let mut powers: Vec<Pmf> = Vec::new();
    let mut power = base.clone();
    power.truncate_to(((top - mu) / d + 1) as usize);
    loop {
        powers.push(power.clone());
        let k = powers.len() as u64 + 1;
        if k > k_max || k * mu > top {
            break;
        }
        let inner = ConvPolicy {
            overflow: OverflowRule::Truncate,
            window_cap: ((top - k * mu) / d + 1) as usize,
            ..*policy
        };
        power = convolve(&power, &base, &inner)?;
    }
    let mut gens = Vec::with_capacity(n + 1);
    gens.push(Pmf::point_mass(1, d));
    for g in 1..=n {
        let prev = &gens[g - 1];
        let lo = lo_of(g);
        let width = cap as usize;
        let mut mx = alloc::vec![f64::NEG_INFINITY; width];
        let mut flagged = false;
        let terms: Vec<(f64, &Pmf)> = prev
            .iter()
            .filter(|&(k, l)| l > f64::NEG_INFINITY && (k as usize) <= powers.len())
            .map(|(k, l)| (l, &powers[k as usize - 1]))
            .collect();
        for &(a, p) in &terms {
            let off = ((p.lo() - lo) / d) as usize;
            if off >= width {
                continue;
            }
            flagged |= p.has_unreliable();
            for (slot, &l) in mx[off..].iter_mut().zip(p.log_weights()) {
                *slot = slot.max(a + l);
            }
        }
        let mut sum = alloc::vec![0.0; width];
        for &(a, p) in &terms {
            let off = ((p.lo() - lo) / d) as usize;
            if off >= width {
                continue;
            }
            for ((s, &m), &l) in sum[off..].iter_mut().zip(&mx[off..]).zip(p.log_weights()) {
                if m > f64::NEG_INFINITY {
                    *s += (a + l - m).exp();
                }
            }
        }
        let logw: Vec<f64> = mx.iter().zip(&sum).map(|(&m, &s)| m + s.ln()).collect();
        let mut out = Pmf::from_log(lo, d, logw, 0.0);
        out.drop_trailing_zeros();
        if flagged || prev.has_unreliable() {
            out.set_unreliable(floor_flags(out.log_weights(), policy.fft_floor));
        }
        let complement = -out.log_total_mass().exp_m1();
        out.set_tail_defect(complement.clamp(0.0, 1.0));
        gens.push(out);
    }
    Ok(gens)
}

/// Prefix window just wide enough to contain `k` for `Z_n` started from `z0`.
pub fn prefix_policy_for(law: &OffspringLaw, n: usize, k: u64, z0: u64, base: &ConvPolicy) -> Option<ConvPolicy> {
    let d = classify(law).d;
    let lo = z0.checked_mul(law.min_count().checked_pow(n as u32)?)?;
    if k < lo {
        return None;
    }
    let width = ((k - lo) / d + 1) as usize;
    Some(ConvPolicy {
        window_cap: width,
        overflow: OverflowRule::Truncate,
        ..*base
    })
}

/// `log P(Z_n = k | Z_0 = z0)`; `-inf` off the lattice or below `z0 mu^n`.
///
/// Computed on the left-exact prefix window ending at `k`, so the value is
/// exact irrespective of how much mass lies to the right.
pub fn point_log_prob(
    law: &OffspringLaw,
    n: usize,
    k: u64,
    z0: u64,
    policy: &ConvPolicy,
) -> Result<f64, PmfError> {
    let Some(pol) = prefix_policy_for(law, n, k, z0, policy) else {
        return Ok(f64::NEG_INFINITY);
    };
    Ok(iterate_pmf(law, n, z0, &pol)?.log_prob(k))
}

/// `log P(Z_n <= k | Z_0 = z0)`.
pub fn cdf_log_leq(
    law: &OffspringLaw,
    n: usize,
    k: u64,
    z0: u64,
    policy: &ConvPolicy,
) -> Result<f64, PmfError> {
    let Some(pol) = prefix_policy_for(law, n, k, z0, policy) else {
        return Ok(f64::NEG_INFINITY);
    };
    Ok(iterate_pmf(law, n, z0, &pol)?.log_cdf(k))
}

/// `f_n(z)` for `|z| <= 1`.
pub fn evaluate_fn(law: &OffspringLaw, n: usize, z: Complex64) -> Complex64 {
    genfn::evaluate_fn(law, n, z)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("replication count must be at least 1")]
    NoReplications,
    #[error("population {size} exceeded the cap {cap}")]
    PopulationOverflow { size: u64, cap: u64 },
}

/// Monte Carlo sample of `Z_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub n: usize,
    pub reps: u64,
    /// Outcome counts keyed by the value of `Z_n`.
    pub counts: BTreeMap<u64, u64>,
    /// `Z_n / m^n` per replication, in replication order.
    pub normalized: Vec<f64>,
}

impl Simulation {
    pub fn empirical_prob(&self, k: u64) -> f64 {
        self.counts.get(&k).copied().unwrap_or(0) as f64 / self.reps as f64
    }
}

/// Simulates `reps` independent paths up to generation `n` from a single
/// ancestor, sampling every individual's offspring. Deterministic in `seed`.
pub fn simulate(
    law: &OffspringLaw,
    n: usize,
    reps: u64,
    seed: u64,
    population_cap: u64,
) -> Result<Simulation, SimError> {
    if reps == 0 {
        return Err(SimError::NoReplications);
    }
    let support: Vec<(u64, f64)> = law.support().collect();
    let index = WeightedIndex::new(support.iter().map(|e| e.1)).expect("valid law weights");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = law.mean().powi(n as i32);
    let mut counts = BTreeMap::new();
    let mut normalized = Vec::with_capacity(reps as usize);
    for _ in 0..reps {
        let mut z = 1u64;
        for _ in 0..n {
            let mut next = 0u64;
            for _ in 0..z {
                next += support[index.sample(&mut rng)].0;
            }
            if next > population_cap {
                return Err(SimError::PopulationOverflow {
                    size: next,
                    cap: population_cap,
                });
            }
            z = next;
        }
        *counts.entry(z).or_insert(0) += 1;
        normalized.push(z as f64 / scale);
    }
    Ok(Simulation {
        n,
        reps,
        counts,
        normalized,
    })
}
