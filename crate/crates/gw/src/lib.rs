//! File formats and the command-line front end for `gw-core`.
//!
//! The binary `gw` is a thin wrapper around [`cli::run`]; laws are read with
//! [`law::load_law`], results are written as CSV through [`table::Table`] and
//! summarized as JSON through [`summary::Summary`].

pub mod cli;
mod commands;
pub mod error;
pub mod law;
pub mod summary;
pub mod table;

pub use cli::{run, RunConfig};
pub use error::CliError;
pub use law::{load_law, parse_law};
pub use table::{emit_plotdata, Table};
