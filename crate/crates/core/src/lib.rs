//! Exact finite-horizon distributions of supercritical Galton-Watson
//! processes, their limit objects, and lower-deviation diagnostics built on
//! exponential tilting.
//!
//! The crate is `no_std` (it needs `alloc`). All transcendental functions go
//! through `libm`, so results do not depend on the host C library.
//!
//! Module map:
//!
//! * [`offspring`] validates offspring laws and computes their invariants.
//! * [`pmf`] holds the log-domain mass function type and its convolutions.
//! * [`genfn`] evaluates iterated generating functions stably.
//! * [`exactdist`] builds the law of `Z_n` and a Monte Carlo cross-check.
//! * [`limits`] constructs norming constants and the law of the limit `W`.
//! * [`cramer`] covers tilted laws, saddle points and local CLT diagnostics.
//! * [`deviations`] evaluates the lower-deviation asymptotics against exact values.
#![no_std]
#![forbid(unsafe_code)]
// Float methods resolve to core on recent toolchains and to num-traits/libm
// on older ones; the imports stay for the latter.
#![allow(unused_imports)]

extern crate alloc;

pub mod cramer;
pub mod deviations;
pub mod exactdist;
mod fft;
pub mod genfn;
pub mod limits;
pub mod math;
pub mod offspring;
pub mod pmf;
pub mod quad;

pub use num_complex::Complex64;
pub use offspring::{Alpha, LawCase, LawError, LawProfile, OffspringLaw};
pub use pmf::{ConvMode, ConvPolicy, Lattice, OverflowRule, Pmf, PmfError};
