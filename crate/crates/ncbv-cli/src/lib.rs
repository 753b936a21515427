//! Library half of the command-line interface: text parsers for rationals,
//! coefficient lists, element syntax, and algebra config files, plus the
//! command drivers that compute reports and exit codes.
//!
//! The binary in `main.rs` is a thin flag-parsing shell over [`run`]; all
//! parsing entry points live here so they can be exercised directly by
//! fuzzing and unit tests.

pub mod config;
pub mod parse;
pub mod run;
