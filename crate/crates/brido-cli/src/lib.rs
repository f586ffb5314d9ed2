//! Library surface of the `brido` command-line tool, exposed so integration
//! tests can drive the pieces directly.

pub mod commands;
pub mod config;
pub mod formats;

/// Exit code for input problems: unreadable files, malformed records,
/// invalid configuration.
pub const EXIT_INPUT_ERROR: u8 = 2;
/// Exit code for numeric threshold or invariant failures.
pub const EXIT_THRESHOLD_FAILURE: u8 = 3;
