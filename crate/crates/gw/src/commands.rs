//! Bodies of the subcommands: each turns validated arguments into a table and a summary.

use gw_core::cramer::{
    concentration_scaling_report, lclt_errors, nonuniform_bound_check, solve_saddle, tilt_consistency, tilt_law,
    tilted_moments,
};
use gw_core::deviations::{
    boettcher_table, log_scale_limit_check, minimal_point_logprob, neighbor_ratio_report, schroeder_ratio_table,
    stabilizes, KSchedule, Quantity,
};
use gw_core::exactdist::{iterate_pmf, point_log_prob, simulate as run_simulation};
use gw_core::limits::{boettcher_function, charfn_w, laplace_w, schroeder_function, CharfnTable};
use gw_core::{Complex64, LawProfile, OffspringLaw};

use crate::cli::{
    norming_for, parse_grid, CramerArgs, CramerWhat, LimitWhat, LimitsArgs, Outcome, PmfArgs, QuantityArg,
    ScheduleArg, SimulateArgs, Theorem, VerifyArgs,
};
use crate::error::CliError;
use crate::summary::{Assertion, Summary};
use crate::table::{format_float, Table};

/// Largest relative width of the Böttcher band.
const BAND_RATIO: f64 = 20.0;
const MINIMAL_TOL: f64 = 1e-9;

fn finish(table: Table, mut summary: Summary) -> Outcome {
    summary.rows = table.rows.len();
    Outcome { table, summary }
}

pub fn pmf(law: &OffspringLaw, profile: &LawProfile, a: &PmfArgs) -> Result<Outcome, CliError> {
    let policy = a.policy.policy()?;
    let p = iterate_pmf(law, a.n, a.z0, &policy)?;
    let mut t = Table::new(&["k", "log_prob", "prob", "unreliable_flag"]).with_plot("k", "prob", "pmf");
    for (i, l) in p.log_weights().iter().enumerate() {
        t.push(vec![p.k_at(i).into(), (*l).into(), l.exp().into(), p.is_unreliable(i).into()]);
    }
    let mut s = Summary::new("pmf", profile);
    s.value("n", a.n);
    s.value("z0", a.z0);
    s.value("lo", p.lo());
    s.value("hi", p.hi());
    s.value("span", p.span());
    s.number("total_mass", p.total_mass());
    s.number("tail_defect", p.tail_defect());
    s.value("unreliable_entries", (0..p.len()).filter(|&i| p.is_unreliable(i)).count());
    Ok(finish(t, s))
}

pub fn simulate(law: &OffspringLaw, profile: &LawProfile, a: &SimulateArgs) -> Result<Outcome, CliError> {
    let sim = run_simulation(law, a.n, a.reps, a.seed, a.population_cap)?;
    let mut t = Table::new(&["k", "count", "empirical_prob"]).with_plot("k", "empirical_prob", "simulate");
    for (&k, &c) in &sim.counts {
        t.push(vec![k.into(), c.into(), sim.empirical_prob(k).into()]);
    }
    let mean = sim.normalized.iter().sum::<f64>() / sim.reps as f64;
    let mut s = Summary::new("simulate", profile);
    s.value("n", a.n);
    s.value("reps", a.reps);
    s.value("seed", a.seed);
    s.number("mean_normalized", mean);
    Ok(finish(t, s))
}

fn default_grid(what: LimitWhat) -> &'static str {
    match what {
        LimitWhat::Phi => "0:10:21",
        LimitWhat::Psi => "0:20:41",
        LimitWhat::Density | LimitWhat::Cdf => "0.05:3:60",
        LimitWhat::Schroeder | LimitWhat::Boettcher => "0:1:11",
        LimitWhat::Norming => "0",
    }
}

pub fn limits(law: &OffspringLaw, profile: &LawProfile, a: &LimitsArgs) -> Result<Outcome, CliError> {
    let grid = parse_grid(a.grid.as_deref().unwrap_or(default_grid(a.what)))?;
    let nm = norming_for(law, a.n, a.norming)?;
    let mut s = Summary::new("limits", profile);
    s.value("n", a.n);
    s.number("c_n", nm.c(a.n));
    let t = match a.what {
        LimitWhat::Phi => {
            let mut t = Table::new(&["x", "value", "error"]).with_plot("x", "value", "phi");
            for &x in &grid {
                if x < 0.0 {
                    return Err(CliError::usage("phi needs grid points x >= 0"));
                }
                let v = laplace_w(law, x, &nm, a.n)?;
                t.push(vec![x.into(), v.value.into(), v.residual.into()]);
            }
            t
        }
        LimitWhat::Psi => {
            let mut t = Table::new(&["x", "value_re", "value_im", "error"]).with_plot("x", "value_re", "psi");
            for &x in &grid {
                let v = charfn_w(law, x, &nm, a.n)?;
                t.push(vec![x.into(), v.value.re.into(), v.value.im.into(), v.residual.into()]);
            }
            t
        }
        LimitWhat::Density | LimitWhat::Cdf => {
            let table = CharfnTable::new(law, &nm, a.quad.params()?)?;
            s.number("quadrature_upper", table.upper());
            if a.what == LimitWhat::Density {
                let mut t = Table::new(&["x", "value", "error", "censored"]).with_plot("x", "value", "density");
                for &x in &grid {
                    let v = table.density(x)?;
                    t.push(vec![x.into(), v.w.into(), v.err.into(), v.censored.into()]);
                }
                t
            } else {
                let mut t = Table::new(&["x", "value", "error"]).with_plot("x", "value", "cdf");
                for &x in &grid {
                    let v = table.cdf(x)?;
                    t.push(vec![x.into(), v.value.into(), v.err.into()]);
                }
                t
            }
        }
        LimitWhat::Schroeder => {
            let mut t = Table::new(&["x", "value", "error"]).with_plot("x", "value", "schroeder");
            for &x in &grid {
                if x.abs() > 1.0 {
                    return Err(CliError::usage("schroeder needs grid points in [-1, 1]"));
                }
                let v = schroeder_function(law, Complex64::new(x, 0.0), a.n)?;
                t.push(vec![x.into(), v.value.re.into(), v.residual.into()]);
            }
            t
        }
        LimitWhat::Boettcher => {
            let mut t = Table::new(&["x", "value", "error"]).with_plot("x", "value", "boettcher");
            for &x in &grid {
                if !(0.0..=1.0).contains(&x) {
                    return Err(CliError::usage("boettcher needs grid points in [0, 1]"));
                }
                let v = boettcher_function(law, x, a.n)?;
                t.push(vec![x.into(), v.value.into(), v.residual.into()]);
            }
            t
        }
        LimitWhat::Norming => {
            // the error column is the change of c_n / m^n over one generation
            let mut t = Table::new(&["n", "value", "error"]).with_plot("n", "value", "norming");
            let m = nm.m();
            for n in 0..=a.n {
                let r = nm.c(n) / m.powi(n as i32);
                let prev = if n == 0 { r } else { nm.c(n - 1) / m.powi(n as i32 - 1) };
                t.push(vec![n.into(), nm.c(n).into(), (r - prev).abs().into()]);
            }
            t
        }
    };
    Ok(finish(t, s))
}

/// `l0, 2 l0, 4 l0, ...` up to `max`; just `[max]` when `l0 > max`.
fn doubling_ells(l0: u64, max: u64) -> Vec<u64> {
    let v: Vec<u64> = (0..64)
        .map_while(|j| l0.checked_mul(1u64 << j))
        .take_while(|&l| l <= max)
        .collect();
    if v.is_empty() {
        vec![max]
    } else {
        v
    }
}

/// `2^j` and `3 * 2^(j-1)` from `l0` up to `max`.
fn interleaved_ells(l0: u64, max: u64) -> Vec<u64> {
    let mut v: Vec<u64> = (0..63)
        .flat_map(|j| [1u64 << j, 3u64 << j >> 1])
        .filter(|&l| l >= l0.max(1) && l <= max)
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

pub fn cramer(law: &OffspringLaw, profile: &LawProfile, a: &CramerArgs) -> Result<Outcome, CliError> {
    let policy = a.policy.policy()?;
    let nm = norming_for(law, a.n, a.norming)?;
    let c_n = nm.c(a.n);
    let l0 = profile.alpha.ell0();
    let mut s = Summary::new("cramer", profile);
    s.value("n", a.n);
    s.number("h", a.h);
    s.number("c_n", c_n);
    s.value("ell0", l0);
    let t = match a.what {
        CramerWhat::Tilt => {
            let spec = tilt_law(law, a.n, a.h, &nm, &policy)?;
            let mut t = Table::new(&["k", "log_prob", "tilted_log_prob", "tilted_prob", "unreliable_flag"])
                .with_plot("k", "tilted_prob", "tilt");
            for (i, (k, l)) in spec.tilted.iter().enumerate() {
                t.push(vec![
                    k.into(),
                    spec.base.log_prob(k).into(),
                    l.into(),
                    l.exp().into(),
                    spec.tilted.is_unreliable(i).into(),
                ]);
            }
            s.number("mean1", spec.mean1);
            s.number("sigma1", spec.sigma1);
            s.number("log_normalizer", spec.log_normalizer);
            s.number("normalizer_discrepancy", spec.normalizer_discrepancy(law));
            s.number("tilt_consistency", tilt_consistency(&spec));
            t
        }
        CramerWhat::Saddle => {
            let mut t = Table::new(&["x", "h", "residual"]).with_plot("x", "h", "saddle");
            for x in parse_grid(&a.x)? {
                let h = solve_saddle(law, a.n, x, &nm)?;
                let mean = tilted_moments(law, a.n, h, c_n).0;
                t.push(vec![x.into(), h.into(), (mean / c_n - x).into()]);
            }
            t
        }
        CramerWhat::Lclt => {
            let spec = tilt_law(law, a.n, a.h, &nm, &policy)?;
            let ells = doubling_ells(l0, a.ell);
            let mut t = Table::new(&["ell", "error"]).with_plot("ell", "error", "lclt");
            for (ell, e) in lclt_errors(&spec, &ells, &policy)? {
                t.push(vec![ell.into(), e.into()]);
            }
            t
        }
        CramerWhat::Concentration => {
            let ells = doubling_ells(l0, a.ell);
            let rows = concentration_scaling_report(law, a.h, &[a.n], &ells, &nm, &policy)?;
            let mut t = Table::new(&["n", "ell", "c_n", "sup", "scaled"]).with_plot("ell", "scaled", "concentration");
            for r in &rows {
                t.push(vec![r.n.into(), r.ell.into(), r.c_n.into(), r.sup.into(), r.scaled.into()]);
            }
            if let Some(first) = rows.first() {
                let max = rows.iter().map(|r| r.scaled).fold(0.0, f64::max);
                s.number("max_over_first", max / first.scaled);
            }
            t
        }
        CramerWhat::Nonuniform => {
            let ells = interleaved_ells(l0, a.ell);
            if ells.len() < 2 {
                return Err(CliError::usage("nonuniform needs --ell large enough for two values of l"));
            }
            let rep = nonuniform_bound_check(law, a.n, &ells, &nm, &policy)?;
            let mut t = Table::new(&["quantity", "ell", "value"]);
            for &(l, r) in &rep.doubling {
                t.push(vec!["doubling_ratio".into(), l.into(), r.into()]);
            }
            for &(l, v) in &rep.h0_scaled {
                t.push(vec!["h0_scaled_sup".into(), l.into(), v.into()]);
            }
            s.number("delta", rep.delta);
            s.number("a", rep.a);
            s.number("heldout_margin", rep.heldout_margin);
            s.assert(Assertion::new(
                "heldout_bound",
                rep.heldout_holds(),
                format!("largest held-out lhs/bound {}", format_float(rep.heldout_margin)),
            ));
            t
        }
    };
    Ok(finish(t, s))
}

fn schedule_for(a: &VerifyArgs, default: ScheduleArg) -> KSchedule {
    match a.schedule.unwrap_or(default) {
        ScheduleArg::NormingPower => KSchedule::NormingPower { rho: a.rho },
        ScheduleArg::NormingMultiple => KSchedule::NormingMultiple { x: a.multiple },
        ScheduleArg::NMuN => KSchedule::GenerationTimesMinimal,
    }
}

fn quantity(a: &VerifyArgs) -> Quantity {
    match a.quantity {
        QuantityArg::Point => Quantity::Point,
        QuantityArg::Cdf => Quantity::Cdf,
    }
}

fn row_assertion(s: &mut Summary, theorem: &str, n: usize, pass: bool, detail: String) {
    s.assert(Assertion::new(format!("{theorem} n={n}"), pass, detail));
}

/// Assertion that consecutive differences of the series shrink.
fn settles(s: &mut Summary, name: &str, rows: &[(usize, f64)]) {
    let ok = stabilizes(rows);
    let last_diff = rows.windows(2).last().map(|w| (w[1].1 - w[0].1).abs());
    s.assert(Assertion::new(
        name,
        ok,
        match last_diff {
            Some(d) => format!("last difference {}", format_float(d)),
            None => "fewer than two rows".into(),
        },
    ));
}

pub fn verify(law: &OffspringLaw, profile: &LawProfile, a: &VerifyArgs) -> Result<Outcome, CliError> {
    let policy = a.policy.policy()?;
    let range = a.n_from..=a.n_to;
    let mut s = Summary::new("verify", profile);
    s.value("n_from", a.n_from);
    s.value("n_to", a.n_to);
    let t = match a.theorem {
        Theorem::Minimal => {
            s.value("theorem", "minimal");
            let mut t = Table::new(&["n", "k", "exact_log", "formula_log", "abs_error", "pass"])
                .with_plot("n", "abs_error", "minimal");
            for n in range {
                let k = profile
                    .mu
                    .checked_pow(n as u32)
                    .ok_or_else(|| CliError::usage(format!("mu^{n} overflows")))?;
                let exact = point_log_prob(law, n, k, 1, &policy)?;
                let formula = minimal_point_logprob(law, n);
                let err = (exact - formula).abs();
                let pass = err <= MINIMAL_TOL;
                t.push(vec![n.into(), k.into(), exact.into(), formula.into(), err.into(), pass.into()]);
                row_assertion(&mut s, "minimal", n, pass, format!("abs error {}", format_float(err)));
            }
            t
        }
        Theorem::Schroeder => {
            s.value("theorem", "schroeder");
            if !profile.is_schroeder() {
                return Err(CliError::usage("the schroeder check needs a law with p_1 > 0"));
            }
            let nm = norming_for(law, a.n_to, a.norming)?;
            let table = CharfnTable::new(law, &nm, a.quad.params()?)?;
            let sched = schedule_for(a, ScheduleArg::NormingPower);
            s.value("schedule", sched.describe());
            let rep = schroeder_ratio_table(law, &table, &nm, &sched, range, quantity(a), &policy)?;
            let mut t = Table::new(&["n", "k", "a_n", "exact_log", "predicted_log", "ratio", "defect", "flagged", "pass"])
                .with_plot("n", "ratio", "schroeder");
            for r in &rep.rows {
                let pass = !r.flagged && r.value.is_finite() && r.value > 0.0;
                t.push(vec![
                    r.n.into(),
                    r.k.into(),
                    r.index.into(),
                    r.exact_log.into(),
                    r.predicted.into(),
                    r.value.into(),
                    r.defect.into(),
                    r.flagged.into(),
                    pass.into(),
                ]);
                row_assertion(&mut s, "schroeder", r.n, pass, format!("ratio {}", format_float(r.value)));
            }
            if let (Some(first), Some(last)) = (rep.rows.first(), rep.rows.last()) {
                let (d0, d1) = ((first.value - 1.0).abs(), (last.value - 1.0).abs());
                s.assert(Assertion::new(
                    "ratio approaches 1",
                    rep.rows.len() < 2 || d1 < d0,
                    format!("|ratio - 1| first {}, last {}", format_float(d0), format_float(d1)),
                ));
            }
            t
        }
        Theorem::Boettcher => {
            s.value("theorem", "boettcher");
            if profile.is_schroeder() {
                return Err(CliError::usage("the boettcher check needs a law with p_1 = 0"));
            }
            // b_n may exceed n, so the norming runs past the last generation
            let nm = norming_for(law, a.n_to + 64, a.norming)?;
            let sched = schedule_for(a, ScheduleArg::NMuN);
            s.value("schedule", sched.describe());
            let rep = boettcher_table(law, &nm, &sched, range, quantity(a), &policy)?;
            let mut t = Table::new(&["n", "k", "b_n", "exact_log", "value", "defect", "flagged", "pass"])
                .with_plot("n", "value", "boettcher");
            for r in &rep.rows {
                let pass = !r.flagged && r.value.is_finite() && r.value < 0.0;
                t.push(vec![
                    r.n.into(),
                    r.k.into(),
                    r.index.into(),
                    r.exact_log.into(),
                    r.value.into(),
                    r.defect.into(),
                    r.flagged.into(),
                    pass.into(),
                ]);
                row_assertion(&mut s, "boettcher", r.n, pass, format!("value {}", format_float(r.value)));
            }
            let values = rep.values();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !values.is_empty() {
                s.assert(Assertion::new(
                    "fixed negative band",
                    hi < 0.0 && lo / hi < BAND_RATIO,
                    format!("band [{}, {}]", format_float(lo), format_float(hi)),
                ));
            }
            t
        }
        Theorem::Neighbor => {
            s.value("theorem", "neighbor");
            s.value("k_offset", a.k_offset);
            let rows = neighbor_ratio_report(law, range, a.k_offset, &policy)?;
            let mut t = Table::new(&["n", "ratio", "pass"]).with_plot("n", "ratio", "neighbor");
            for &(n, r) in &rows {
                let pass = r.is_finite() && r > 0.0;
                t.push(vec![n.into(), r.into(), pass.into()]);
                row_assertion(&mut s, "neighbor", n, pass, format!("ratio {}", format_float(r)));
            }
            settles(&mut s, "ratio settles", &rows);
            t
        }
        Theorem::Logscale => {
            s.value("theorem", "logscale");
            s.value("k_offset", a.k_offset);
            if profile.is_schroeder() {
                return Err(CliError::usage("the logscale check needs a law with p_1 = 0"));
            }
            let mu = profile.mu;
            let limit = law.log_prob(mu) / (mu - 1) as f64;
            s.number("limit", limit);
            let rows = log_scale_limit_check(law, range, a.k_offset, &policy)?;
            let mut t = Table::new(&["n", "value", "limit", "pass"]).with_plot("n", "value", "logscale");
            for &(n, v) in &rows {
                let pass = v.is_finite();
                t.push(vec![n.into(), v.into(), limit.into(), pass.into()]);
                row_assertion(&mut s, "logscale", n, pass, format!("value {}", format_float(v)));
            }
            settles(&mut s, "value settles", &rows);
            if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
                let (d0, d1) = ((first.1 - limit).abs(), (last.1 - limit).abs());
                s.assert(Assertion::new(
                    "value approaches the limit",
                    rows.len() < 2 || d1 <= d0,
                    format!("distance first {}, last {}", format_float(d0), format_float(d1)),
                ));
            }
            t
        }
    };
    Ok(finish(t, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ell_sequences() {
        assert_eq!(doubling_ells(2, 64), vec![2, 4, 8, 16, 32, 64]);
        assert_eq!(doubling_ells(1, 5), vec![1, 2, 4]);
        assert_eq!(doubling_ells(8, 4), vec![4]);
        assert_eq!(interleaved_ells(2, 32), vec![2, 3, 4, 6, 8, 12, 16, 24, 32]);
    }
}
