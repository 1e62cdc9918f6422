//! Offspring laws: validation, generating-function evaluation and the
//! invariants that decide which asymptotic regime applies.

use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;
use num_traits::Float;

use crate::math::{gcd, log_sum_exp};

/// Absolute tolerance on the total mass of an offspring law.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Stopping tolerance of the monotone fixed-point iteration for `q`.
pub const FIXED_POINT_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LawError {
    #[error("offspring law has no entries")]
    Empty,
    #[error("probability for offspring count {count} is not a finite value in [0, 1]: {value}")]
    InvalidProbability { count: u64, value: f64 },
    #[error("offspring count {0} appears more than once")]
    DuplicateCount(u64),
    #[error("probabilities sum to {sum}, not 1")]
    NonStochastic { sum: f64 },
    #[error("p_0 = {p0} > 0 is not supported")]
    HasZeroOffspring { p0: f64 },
    #[error("offspring law is a point mass at {0}")]
    Degenerate(u64),
    #[error("offspring mean {mean} does not exceed 1")]
    Subcritical { mean: f64 },
}

/// A finite-support offspring law with `p_0 = 0`, stored densely from the
/// minimal offspring count `mu` up to the maximal count.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    mu: u64,
    probs: Vec<f64>,
    /// `log p_j`; finite even where `p_j` underflows.
    log_probs: Vec<f64>,
    /// `tails[i] = P(X > i)` for `i = 0..max`.
    tails: Vec<f64>,
}

impl OffspringLaw {
    /// Validates `(count, probability)` pairs and normalizes the total mass
    /// to exactly one. Zero probabilities are allowed and ignored.
    pub fn validate(entries: &[(u64, f64)]) -> Result<Self, LawError> {
        let mut sorted: Vec<(u64, f64)> = Vec::with_capacity(entries.len());
        for &(j, p) in entries {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(LawError::InvalidProbability { count: j, value: p });
            }
            sorted.push((j, p));
        }
        sorted.sort_by_key(|e| e.0);
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(LawError::DuplicateCount(w[0].0));
            }
        }
        sorted.retain(|e| e.1 > 0.0);
        if sorted.is_empty() {
            return Err(LawError::Empty);
        }
        let sum: f64 = sorted.iter().map(|e| e.1).sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(LawError::NonStochastic { sum });
        }
        if sorted[0].0 == 0 {
            return Err(LawError::HasZeroOffspring { p0: sorted[0].1 });
        }
        if sorted.len() == 1 {
            return Err(LawError::Degenerate(sorted[0].0));
        }
        let mu = sorted[0].0;
        let max = sorted[sorted.len() - 1].0;
        let mut probs = alloc::vec![0.0; (max - mu + 1) as usize];
        for &(j, p) in &sorted {
            probs[(j - mu) as usize] = p / sum;
        }
        let law = Self::from_dense(mu, probs);
        let mean = law.mean();
        if mean <= 1.0 {
            return Err(LawError::Subcritical { mean });
        }
        Ok(law)
    }

    /// Law with `log p_j = logw[j - mu]` up to normalization, for supports
    /// whose smallest probabilities underflow in linear form.
    pub fn from_log_weights(mu: u64, logw: &[f64]) -> Result<Self, LawError> {
        if logw.is_empty() {
            return Err(LawError::Empty);
        }
        for (i, &l) in logw.iter().enumerate() {
            if l.is_nan() || l == f64::INFINITY {
                return Err(LawError::InvalidProbability { count: mu + i as u64, value: l });
            }
        }
        let z = log_sum_exp(logw);
        if z == f64::NEG_INFINITY {
            return Err(LawError::Empty);
        }
        let mut log_probs: Vec<f64> = logw.iter().map(|&l| l - z).collect();
        let mut mu = mu;
        while log_probs[0] == f64::NEG_INFINITY {
            log_probs.remove(0);
            mu += 1;
        }
        while log_probs[log_probs.len() - 1] == f64::NEG_INFINITY {
            log_probs.pop();
        }
        if mu == 0 {
            return Err(LawError::HasZeroOffspring { p0: log_probs[0].exp() });
        }
        if log_probs.len() == 1 {
            return Err(LawError::Degenerate(mu));
        }
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        let mut law = Self::from_dense(mu, probs);
        law.log_probs = log_probs;
        let mean = law.mean();
        if mean <= 1.0 {
            return Err(LawError::Subcritical { mean });
        }
        Ok(law)
    }

    /// Geometric law with mean `mean` cut at `max_count` and renormalized in
    /// the log domain.
    pub fn geometric(mean: f64, max_count: u64) -> Result<Self, LawError> {
        if !(mean > 1.0) || !mean.is_finite() {
            return Err(LawError::Subcritical { mean });
        }
        let lr = (-1.0 / mean).ln_1p();
        let logw: Vec<f64> = (0..max_count.max(1)).map(|i| i as f64 * lr).collect();
        Self::from_log_weights(1, &logw)
    }

    fn from_dense(mu: u64, probs: Vec<f64>) -> Self {
        let max = mu as usize + probs.len() - 1;
        let mut tails = alloc::vec![0.0; max];
        // tails[i] = sum_{j > i} p_j, accumulated from the top for accuracy
        let mut acc = 0.0;
        for i in (0..max).rev() {
            let j = i + 1;
            if j >= mu as usize {
                acc += probs[j - mu as usize];
            }
            tails[i] = acc;
        }
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        Self { mu, probs, log_probs, tails }
    }

    /// Geometric law `p_j = m^{-1} (1 - m^{-1})^{j-1}`, `j >= 1`, truncated at
    /// the first `j` whose remaining tail is below `tail` and renormalized.
    pub fn truncated_geometric(mean: f64, tail: f64) -> Result<Self, LawError> {
        if !(mean > 1.0) || !mean.is_finite() {
            return Err(LawError::Subcritical { mean });
        }
        let p = 1.0 / mean;
        let r = 1.0 - p;
        let mut entries = Vec::new();
        let mut j = 1u64;
        loop {
            entries.push((j, p * r.powi(j as i32 - 1)));
            if r.powi(j as i32) < tail {
                break;
            }
            j += 1;
        }
        let sum: f64 = entries.iter().map(|e| e.1).sum();
        for e in &mut entries {
            e.1 /= sum;
        }
        Self::validate(&entries)
    }

    /// Minimal offspring count with positive probability.
    pub fn min_count(&self) -> u64 {
        self.mu
    }

    /// Maximal offspring count with positive probability.
    pub fn max_count(&self) -> u64 {
        self.mu + self.probs.len() as u64 - 1
    }

    /// `p_j`, zero outside the support window.
    pub fn prob(&self, j: u64) -> f64 {
        if j < self.mu {
            return 0.0;
        }
        self.probs.get((j - self.mu) as usize).copied().unwrap_or(0.0)
    }

    /// `log p_j`, `-inf` outside the support.
    pub fn log_prob(&self, j: u64) -> f64 {
        if j < self.mu {
            return f64::NEG_INFINITY;
        }
        self.log_probs.get((j - self.mu) as usize).copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Iterator over `(j, p_j)` with `log p_j > -inf`; `p_j` itself may underflow.
    pub fn support(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|&(i, _)| self.log_probs[i] > f64::NEG_INFINITY)
            .map(move |(i, &p)| (self.mu + i as u64, p))
    }

    pub fn mean(&self) -> f64 {
        self.support().map(|(j, p)| j as f64 * p).sum()
    }

    /// `f(s)` for real `s`.
    pub fn pgf(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for &p in self.probs.iter().rev() {
            acc = acc * s + p;
        }
        acc * s.powi(self.mu as i32)
    }

    /// `f'(s)` for real `s`.
    pub fn pgf_deriv(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate().rev() {
            let j = self.mu as usize + i;
            acc = acc * s + p * j as f64;
        }
        acc * s.powi(self.mu as i32 - 1)
    }

    /// `f(z)` for complex `z`, by Horner evaluation.
    pub fn pgf_complex(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &p in self.probs.iter().rev() {
            acc = acc * z + p;
        }
        acc * z.powu(self.mu as u32)
    }

    /// `Q(z) = sum_i P(X > i) z^i`, so that `1 - f(z) = (1 - z) Q(z)`.
    pub fn complement_factor(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &t in self.tails.iter().rev() {
            acc = acc * z + t;
        }
        acc
    }

    /// Tilted moments of the law at `t >= 0`: weights `p_j e^{-j t}`.
    /// Returns `(-log f(e^{-t}), mean, variance)` of the tilted law.
    pub(crate) fn tilted_log_moments(&self, t: f64) -> (f64, f64, f64) {
        // -log f(e^{-t}) = mu t - log(1 + sum_j p_j expm1(-(j - mu) t))
        let mut s_dev = 0.0;
        let mut w_sum = 0.0;
        let mut w1 = 0.0;
        let mut w2 = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let k = i as f64;
            s_dev += p * (-k * t).exp_m1();
            let w = p * (-k * t).exp();
            w_sum += w;
            w1 += w * k;
            w2 += w * k * k;
        }
        let neg_log = self.mu as f64 * t - s_dev.ln_1p();
        let mean_excess = w1 / w_sum;
        let var = (w2 / w_sum - mean_excess * mean_excess).max(0.0);
        (neg_log, self.mu as f64 + mean_excess, var)
    }
}

/// The exponent `alpha` defined by `gamma = m^{-alpha}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Finite(f64),
    /// Böttcher case, `gamma = 0`.
    Infinite,
}

impl Alpha {
    pub fn finite(self) -> Option<f64> {
        match self {
            Alpha::Finite(a) => Some(a),
            Alpha::Infinite => None,
        }
    }

    /// `1 + floor(1/alpha)`, the smallest number of summands with a bounded
    /// concentration function; 1 when alpha is infinite.
    pub fn ell0(self) -> u64 {
        match self {
            // tolerate rounding when 1/alpha is an integer
            Alpha::Finite(a) => 1 + (1.0 / a + 1e-9).floor() as u64,
            Alpha::Infinite => 1,
        }
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alpha::Finite(a) => write!(f, "{a}"),
            Alpha::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawCase {
    Schroeder,
    Boettcher,
}

impl fmt::Display for LawCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LawCase::Schroeder => "schroeder",
            LawCase::Boettcher => "boettcher",
        })
    }
}

/// Scalar invariants of an offspring law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawProfile {
    pub m: f64,
    pub q: f64,
    pub gamma: f64,
    pub alpha: Alpha,
    /// Mash: gcd of pairwise differences of support points.
    pub d: u64,
    /// Minimal support point.
    pub mu: u64,
    /// `log mu / log m`, Böttcher case only.
    pub beta: Option<f64>,
    pub case: LawCase,
}

impl LawProfile {
    pub fn is_schroeder(&self) -> bool {
        self.case == LawCase::Schroeder
    }
}

/// Computes the profile of a validated law.
pub fn classify(law: &OffspringLaw) -> LawProfile {
    let m = law.mean();
    let mut s = 0.0f64;
    loop {
        let next = law.pgf(s);
        let done = (next - s).abs() < FIXED_POINT_TOL;
        s = next;
        if done {
            break;
        }
    }
    let q = s;
    let gamma = law.pgf_deriv(q);
    let mu = law.min_count();
    let d = law.support().fold(0u64, |g, (j, _)| gcd(g, j - mu));
    let (alpha, beta, case) = if gamma > 0.0 {
        (Alpha::Finite(-gamma.ln() / m.ln()), None, LawCase::Schroeder)
    } else {
        let beta = (mu as f64).ln() / m.ln();
        (Alpha::Infinite, Some(beta), LawCase::Boettcher)
    };
    LawProfile {
        m,
        q,
        gamma,
        alpha,
        d: d.max(1),
        mu,
        beta,
        case,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_examples() {
        let a = OffspringLaw::validate(&[(2, 0.5), (3, 0.5)]).unwrap();
        assert!((a.mean() - 2.5).abs() < 1e-15);
        let b = OffspringLaw::validate(&[(1, 0.5), (2, 0.5)]).unwrap();
        assert!((b.mean() - 1.5).abs() < 1e-15);
        assert!(matches!(
            OffspringLaw::validate(&[(0, 0.25), (2, 0.75)]),
            Err(LawError::HasZeroOffspring { .. })
        ));
    }

    #[test]
    fn validate_error_paths() {
        assert!(matches!(
            OffspringLaw::validate(&[(2, 0.5), (3, 0.4)]),
            Err(LawError::NonStochastic { .. })
        ));
        assert_eq!(
            OffspringLaw::validate(&[(3, 1.0)]),
            Err(LawError::Degenerate(3))
        );
        // with p_0 = 0 every non-degenerate law is supercritical
        assert!(OffspringLaw::validate(&[(1, 0.99), (2, 0.01)]).is_ok());
        assert!(matches!(
            OffspringLaw::truncated_geometric(0.9, 1e-15),
            Err(LawError::Subcritical { .. })
        ));
        assert!(matches!(
            OffspringLaw::validate(&[(1, 0.5), (1, 0.5)]),
            Err(LawError::DuplicateCount(1))
        ));
        assert!(matches!(
            OffspringLaw::validate(&[(1, -0.5), (2, 1.5)]),
            Err(LawError::InvalidProbability { .. })
        ));
        assert_eq!(OffspringLaw::validate(&[]), Err(LawError::Empty));
    }

    #[test]
    fn classify_geometric() {
        let law = OffspringLaw::truncated_geometric(2.0, 1e-15).unwrap();
        let p = classify(&law);
        assert_eq!((p.d, p.mu), (1, 1));
        assert_eq!(p.q, 0.0);
        assert!((p.gamma - 0.5).abs() < 1e-14);
        assert!((p.alpha.finite().unwrap() - 1.0).abs() < 1e-13);
        assert_eq!(p.case, LawCase::Schroeder);
        assert_eq!(p.alpha.ell0(), 2);
    }

    #[test]
    fn classify_boettcher_examples() {
        let law = OffspringLaw::validate(&[(2, 0.5), (3, 0.5)]).unwrap();
        let p = classify(&law);
        assert_eq!((p.d, p.mu), (1, 2));
        assert_eq!((p.q, p.gamma), (0.0, 0.0));
        assert_eq!(p.alpha, Alpha::Infinite);
        assert_eq!(p.case, LawCase::Boettcher);
        let beta = p.beta.unwrap();
        assert!((beta - 2f64.ln() / 2.5f64.ln()).abs() < 1e-15);
        assert!((beta - 0.75647).abs() < 1e-5);
        assert!(((p.m.powf(beta) - 2.0) / 2.0).abs() < 1e-12);

        let law = OffspringLaw::validate(&[(2, 0.3), (4, 0.7)]).unwrap();
        let p = classify(&law);
        assert_eq!((p.d, p.mu), (2, 2));
        assert!((p.m - 3.4).abs() < 1e-14);
        assert_eq!(p.case, LawCase::Boettcher);
    }

    #[test]
    fn complement_factor_matches_direct() {
        let law = OffspringLaw::validate(&[(1, 0.2), (2, 0.3), (5, 0.5)]).unwrap();
        let z = Complex64::new(0.3, -0.4);
        let lhs = Complex64::new(1.0, 0.0) - law.pgf_complex(z);
        let rhs = (Complex64::new(1.0, 0.0) - z) * law.complement_factor(z);
        assert!((lhs - rhs).norm() < 1e-15);
    }

    mod props {
        use alloc::vec::Vec;
    use crate::offspring::classify;
    use crate::{LawCase, OffspringLaw};
    use proptest::prelude::*;

    fn law_strategy() -> impl Strategy<Value = OffspringLaw> {
        (1u64..=3, prop::collection::vec(0.05f64..1.0, 2..=4), 1u64..=2).prop_map(|(mu, w, step)| {
            let entries: Vec<(u64, f64)> = w.iter().enumerate().map(|(i, &x)| (mu + step * i as u64, x)).collect();
            let total: f64 = entries.iter().map(|e| e.1).sum();
            let entries: Vec<(u64, f64)> = entries.into_iter().map(|(k, x)| (k, x / total)).collect();
            OffspringLaw::validate(&entries).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn profile_invariants(law in law_strategy()) {
            let p = classify(&law);
            for (k, _) in law.support() {
                prop_assert_eq!((k - p.mu) % p.d, 0);
            }
            prop_assert_eq!(p.case == LawCase::Boettcher, p.mu >= 2);
            if let Some(beta) = p.beta {
                prop_assert!((p.m.powf(beta) / p.mu as f64 - 1.0).abs() < 1e-12);
            }
            prop_assert!(p.q == 0.0);
        }
    }
    }
}
