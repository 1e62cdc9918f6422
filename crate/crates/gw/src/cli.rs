//! Argument parsing, validation and dispatch for the `gw` binary.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gw_core::limits::{norming, NormingMode, NormingSequence, QuadParams};
use gw_core::offspring::classify;
use gw_core::{ConvMode, ConvPolicy, LawProfile, OffspringLaw, OverflowRule};

use crate::commands;
use crate::error::CliError;
use crate::law::load_law;
use crate::summary::Summary;
use crate::table::{emit_plotdata, Table};

/// Exact laws of supercritical Galton-Watson generations, their limit
/// objects, and lower-deviation checks.
///
/// Every command reads an offspring law from a JSON file of the form
/// {"p": {"1": 0.5, "2": 0.5}} and writes a CSV table (standard output unless
/// --out is given). Exit status: 0 on success, 1 when a checked assertion
/// fails, 2 on usage or input errors, 3 when a numerical procedure does not
/// converge. GW_THREADS caps internal parallelism.
#[derive(Debug, Parser)]
#[command(name = "gw", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Progress messages on standard error; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Law of Z_n: columns k, log_prob, prob, unreliable_flag.
    Pmf(PmfArgs),
    /// Monte Carlo sample of Z_n: columns k, count, empirical_prob.
    Simulate(SimulateArgs),
    /// Limit objects of W = lim Z_n / c_n on a grid.
    Limits(LimitsArgs),
    /// Tilted laws, saddle points and local limit diagnostics.
    Cramer(CramerArgs),
    /// Lower-deviation checks with one pass/fail assertion per row.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct IoArgs {
    /// Offspring law file.
    #[arg(long)]
    pub law: PathBuf,
    /// CSV output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON summary output.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// (x, y, series) plot data output.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    DirectLog,
    FftHybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormingArg {
    /// c_n = m^n.
    Power,
    /// c_n = 1/h_n with f_n(exp(-h_n)) = exp(-1).
    Seneta,
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    /// Convolution engine.
    #[arg(long, value_enum, default_value_t = ModeArg::DirectLog)]
    pub mode: ModeArg,
    /// Largest number of lattice points kept per distribution.
    #[arg(long, default_value_t = 1 << 16)]
    pub window_cap: usize,
    /// Right-tail mass that may be trimmed per step.
    #[arg(long, default_value_t = 1e-12)]
    pub tail_tol: f64,
    /// Keep the left part of the window instead of failing when the cap is hit.
    #[arg(long)]
    pub truncate: bool,
}

impl PolicyArgs {
    pub(crate) fn policy(&self) -> Result<ConvPolicy, CliError> {
        if !(self.tail_tol > 0.0 && self.tail_tol < 1.0) {
            return Err(CliError::usage("--tail-tol must lie in (0, 1)"));
        }
        let p = ConvPolicy {
            mode: match self.mode {
                ModeArg::DirectLog => ConvMode::DirectLog,
                ModeArg::FftHybrid => ConvMode::FftHybrid,
            },
            window_cap: self.window_cap,
            tail_tol: self.tail_tol,
            overflow: if self.truncate {
                OverflowRule::Truncate
            } else {
                OverflowRule::Error
            },
            ..ConvPolicy::default()
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Args)]
pub struct QuadArgs {
    /// End of the first dyadic quadrature block.
    #[arg(long, default_value_t = QuadParams::default().u0)]
    pub u0: f64,
    /// Filon panels per dyadic block.
    #[arg(long, default_value_t = QuadParams::default().panels_per_block)]
    pub panels_per_block: usize,
    /// Largest number of dyadic blocks.
    #[arg(long, default_value_t = QuadParams::default().max_blocks)]
    pub max_blocks: usize,
    /// Largest acceptable error estimate of a density or cdf value.
    #[arg(long, default_value_t = QuadParams::default().error_tol)]
    pub error_tol: f64,
}

impl QuadArgs {
    pub(crate) fn params(&self) -> Result<QuadParams, CliError> {
        let d = QuadParams::default();
        if !(self.u0 > 0.0) || self.panels_per_block == 0 || self.max_blocks < d.min_blocks || !(self.error_tol > 0.0) {
            return Err(CliError::usage(format!(
                "quadrature settings need u0 > 0, panels-per-block >= 1, max-blocks >= {}, error-tol > 0",
                d.min_blocks
            )));
        }
        Ok(QuadParams {
            u0: self.u0,
            panels_per_block: self.panels_per_block,
            max_blocks: self.max_blocks,
            error_tol: self.error_tol,
            ..d
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct PmfArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// Generation.
    #[arg(long)]
    pub n: usize,
    /// Initial population.
    #[arg(long, default_value_t = 1)]
    pub z0: u64,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long)]
    pub n: usize,
    /// Number of independent paths.
    #[arg(long, default_value_t = 100_000)]
    pub reps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest population a path may reach.
    #[arg(long, default_value_t = 100_000_000)]
    pub population_cap: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LimitWhat {
    /// Laplace transform E exp(-xW).
    Phi,
    /// Characteristic function E exp(ixW).
    Psi,
    /// Density of W.
    Density,
    /// P(W <= x).
    Cdf,
    /// Schröder function at real arguments in [-1, 1].
    Schroeder,
    /// Böttcher function at arguments in [0, 1].
    Boettcher,
    /// c_0, ..., c_n.
    Norming,
}

#[derive(Debug, Clone, Args)]
pub struct LimitsArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long, value_enum)]
    pub what: LimitWhat,
    /// Evaluation points: "a,b,c", "start:stop:count" or "log:start:stop:count".
    #[arg(long)]
    pub grid: Option<String>,
    /// Generation used to approximate the limit; also the norming horizon.
    #[arg(long, default_value_t = 40)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = NormingArg::Power)]
    pub norming: NormingArg,
    #[command(flatten)]
    pub quad: QuadArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CramerWhat {
    /// Law of X_1(h, n), the tilted Z_n.
    Tilt,
    /// h solving E X_1(h, n) / c_n = x for every grid point x.
    Saddle,
    /// Local CLT error of S_l(h, n) for l = l0, 2 l0, ... up to --ell.
    Lclt,
    /// l^(1/2) c_n sup_k P(S_l(h, n) = k) for l = l0, 2 l0, ... up to --ell.
    Concentration,
    /// Fitted constants of the non-uniform bound for Z_0 = l.
    Nonuniform,
}

#[derive(Debug, Clone, Args)]
pub struct CramerArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long, value_enum)]
    pub what: CramerWhat,
    /// Tilt parameter.
    #[arg(long, default_value_t = 1.0)]
    pub h: f64,
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    /// Largest number of summands or initial individuals.
    #[arg(long, default_value_t = 64)]
    pub ell: u64,
    /// Saddle targets, same syntax as the limits grid.
    #[arg(long, default_value = "0.5")]
    pub x: String,
    #[arg(long, value_enum, default_value_t = NormingArg::Power)]
    pub norming: NormingArg,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Theorem {
    /// P(Z_n = k_n) against d w(k_n / s_n) / s_n with s_n = m^(n - a_n) c_(a_n).
    Schroeder,
    /// mu^{b_n - n} log(c_n P(Z_n = k_n)) in a fixed negative band.
    Boettcher,
    /// P(Z_n = mu^n) = p_mu^((mu^n - 1)/(mu - 1)).
    Minimal,
    /// P(Z_n = mu^n + k) / (mu^{nk} P(Z_n = mu^n)) settles.
    Neighbor,
    /// mu^{-n} log P(Z_n = mu^n + k) tends to log p_mu / (mu - 1).
    Logscale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    /// k_n = c_n^rho.
    NormingPower,
    /// k_n = x c_n with x from --multiple.
    NormingMultiple,
    /// k_n = n mu^n.
    NMuN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuantityArg {
    /// P(Z_n = k_n).
    Point,
    /// P(Z_n <= k_n).
    Cdf,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long, value_enum)]
    pub theorem: Theorem,
    /// Exponent of the norming-power schedule.
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Factor of the norming-multiple schedule.
    #[arg(long, default_value_t = 0.5)]
    pub multiple: f64,
    /// How k_n follows n; by default norming-power for schroeder and n-mu-n for boettcher.
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    #[arg(long, value_enum, default_value_t = QuantityArg::Point)]
    pub quantity: QuantityArg,
    #[arg(long, default_value_t = 8)]
    pub n_from: usize,
    #[arg(long, default_value_t = 18)]
    pub n_to: usize,
    /// Offset k above mu^n for neighbor and logscale.
    #[arg(long, default_value_t = 1)]
    pub k_offset: u64,
    #[arg(long, value_enum, default_value_t = NormingArg::Power)]
    pub norming: NormingArg,
    #[command(flatten)]
    pub quad: QuadArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

/// Validated settings of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub law_path: PathBuf,
    pub command: Command,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub verbosity: u8,
    /// Thread cap from `GW_THREADS`; computations here run on one thread.
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_cli(cli: Cli, gw_threads: Option<&str>) -> Result<Self, CliError> {
        let threads = match gw_threads {
            None => None,
            Some(s) => match s.trim().parse::<usize>() {
                Ok(t) if t >= 1 => Some(t),
                _ => return Err(CliError::usage(format!("GW_THREADS must be a positive integer, got {s:?}"))),
            },
        };
        let io = match &cli.command {
            Command::Pmf(a) => &a.io,
            Command::Simulate(a) => &a.io,
            Command::Limits(a) => &a.io,
            Command::Cramer(a) => &a.io,
            Command::Verify(a) => &a.io,
        }
        .clone();
        validate(&cli.command)?;
        let summary = match (&cli.command, io.summary, &io.out) {
            (_, Some(s), _) => Some(s),
            (Command::Verify(_), None, Some(out)) => Some(out.with_extension("json")),
            _ => None,
        };
        Ok(Self {
            law_path: io.law,
            command: cli.command,
            out: io.out,
            summary,
            plot: io.plot,
            verbosity: cli.verbose,
            threads,
        })
    }
}

fn validate(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Pmf(a) => {
            a.policy.policy()?;
            if a.z0 == 0 {
                return Err(CliError::usage("--z0 must be at least 1"));
            }
        }
        Command::Simulate(a) => {
            if a.reps == 0 {
                return Err(CliError::usage("--reps must be at least 1"));
            }
        }
        Command::Limits(a) => {
            a.quad.params()?;
            if let Some(g) = &a.grid {
                parse_grid(g)?;
            }
            if a.n == 0 {
                return Err(CliError::usage("--n must be at least 1"));
            }
        }
        Command::Cramer(a) => {
            a.policy.policy()?;
            parse_grid(&a.x)?;
            if !(a.h >= 0.0 && a.h.is_finite()) {
                return Err(CliError::usage("--h must be a finite value >= 0"));
            }
            if a.n == 0 || a.ell == 0 {
                return Err(CliError::usage("--n and --ell must be at least 1"));
            }
        }
        Command::Verify(a) => {
            a.policy.policy()?;
            a.quad.params()?;
            if a.n_from == 0 || a.n_from > a.n_to {
                return Err(CliError::usage("need 1 <= --n-from <= --n-to"));
            }
            if !(a.rho > 0.0 && a.rho < 1.0) {
                return Err(CliError::usage("--rho must lie in (0, 1)"));
            }
            if !(a.multiple > 0.0 && a.multiple.is_finite()) {
                return Err(CliError::usage("--multiple must be positive"));
            }
        }
    }
    Ok(())
}

/// Parses "a,b,c", "start:stop:count" (inclusive, evenly spaced) or
/// "log:start:stop:count" (geometric spacing).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::usage(format!("cannot parse grid {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(bad);
    let (log, body) = match spec.strip_prefix("log:") {
        Some(rest) => (true, rest),
        None => (false, spec.strip_prefix("lin:").unwrap_or(spec)),
    };
    if !body.contains(':') {
        if log {
            return Err(bad());
        }
        return body.split(',').map(num).collect();
    }
    let parts: Vec<&str> = body.split(':').collect();
    let [a, b, c] = parts[..] else {
        return Err(bad());
    };
    let (a, b) = (num(a)?, num(b)?);
    let count: usize = c.trim().parse().map_err(|_| bad())?;
    if count == 0 || (log && !(a > 0.0 && b > 0.0)) {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![a]);
    }
    let step = |i: usize| i as f64 / (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if log {
                (a.ln() + (b.ln() - a.ln()) * step(i)).exp()
            } else {
                a + (b - a) * step(i)
            }
        })
        .collect())
}

pub(crate) fn norming_mode(a: NormingArg) -> NormingMode {
    match a {
        NormingArg::Power => NormingMode::Power,
        NormingArg::Seneta => NormingMode::Seneta,
    }
}

pub(crate) fn norming_for(law: &OffspringLaw, horizon: usize, a: NormingArg) -> Result<NormingSequence, CliError> {
    Ok(norming(law, horizon, norming_mode(a))?)
}

/// What a command produced.
pub struct Outcome {
    pub table: Table,
    pub summary: Summary,
}

/// Runs one command and writes its artifacts.
pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let law = load_law(&cfg.law_path)?;
    let profile: LawProfile = classify(&law);
    if cfg.verbosity > 0 {
        eprintln!("gw: law with m = {}, mu = {}, d = {}", profile.m, profile.mu, profile.d);
    }
    let outcome = match &cfg.command {
        Command::Pmf(a) => commands::pmf(&law, &profile, a)?,
        Command::Simulate(a) => commands::simulate(&law, &profile, a)?,
        Command::Limits(a) => commands::limits(&law, &profile, a)?,
        Command::Cramer(a) => commands::cramer(&law, &profile, a)?,
        Command::Verify(a) => commands::verify(&law, &profile, a)?,
    };
    write_outputs(cfg, &outcome)?;
    Ok(outcome)
}

fn write_file(path: &Path, body: &[u8]) -> Result<(), CliError> {
    fs::write(path, body).map_err(|source| CliError::Output {
        path: path.display().to_string(),
        source,
    })
}

fn write_outputs(cfg: &RunConfig, o: &Outcome) -> Result<(), CliError> {
    let csv = o.table.to_csv_string();
    match &cfg.out {
        Some(p) => write_file(p, csv.as_bytes())?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(csv.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Output {
                    path: "standard output".into(),
                    source,
                })?;
        }
    }
    if let Some(p) = &cfg.plot {
        let mut buf = Vec::new();
        emit_plotdata(&o.table, &mut buf).expect("writing to memory");
        write_file(p, &buf)?;
    }
    if let Some(p) = &cfg.summary {
        write_file(p, o.summary.to_json().as_bytes())?;
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let threads = std::env::var("GW_THREADS").ok();
    let result = RunConfig::from_cli(cli, threads.as_deref()).and_then(|cfg| {
        let o = execute(&cfg)?;
        Ok((cfg, o))
    });
    match result {
        Ok((cfg, o)) => {
            let failed = o.summary.assertions.iter().filter(|a| !a.pass).count();
            if cfg.verbosity > 0 || failed > 0 {
                for a in o.summary.assertions.iter().filter(|a| cfg.verbosity > 0 || !a.pass) {
                    eprintln!("gw: {} {}: {}", if a.pass { "pass" } else { "FAIL" }, a.name, a.detail);
                }
            }
            if failed > 0 {
                eprintln!("gw: {failed} of {} assertions failed", o.summary.assertions.len());
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("gw: error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0.5").unwrap(), vec![0.5]);
        assert_eq!(parse_grid("1,2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_grid("0:1:5").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = parse_grid("log:0.01:1:3").unwrap();
        assert!((g[1] - 0.1).abs() < 1e-15 && g[2] == 1.0);
        for bad in ["", "a", "0:1", "log:0:1:3", "0:1:0", "1,x", "log:1,2"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn bad_knobs_are_usage_errors() {
        let parse = |args: &[&str]| {
            let cli = Cli::try_parse_from(args.iter().copied()).unwrap();
            RunConfig::from_cli(cli, None)
        };
        let e = parse(&["gw", "verify", "--law", "x.json", "--theorem", "minimal", "--n-from", "5", "--n-to", "2"]);
        assert_eq!(e.unwrap_err().exit_code(), 2);
        let e = parse(&["gw", "pmf", "--law", "x.json", "--n", "3", "--tail-tol", "2"]);
        assert_eq!(e.unwrap_err().exit_code(), 2);
        let cli = Cli::try_parse_from(["gw", "pmf", "--law", "x.json", "--n", "3"]).unwrap();
        assert_eq!(RunConfig::from_cli(cli, Some("0")).unwrap_err().exit_code(), 2);
        let cfg = parse(&["gw", "verify", "--law", "x.json", "--theorem", "minimal", "--out", "r.csv"]).unwrap();
        assert_eq!(cfg.summary, Some(PathBuf::from("r.json")));
    }
}
