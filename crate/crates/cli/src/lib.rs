//! Command line harness for `burgers-stab`: run directories, parameter
//! sweeps and the exit-code contract.

pub mod artifacts;
pub mod sweep;

use burgers_stab::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_DIVERGED: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_VIOLATION: u8 = 4;

/// Environment variable that replaces the default output root.
pub const OUT_ENV: &str = "BURGERS_STAB_OUT";
pub const DEFAULT_OUT: &str = "runs";

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } => EXIT_DIVERGED,
        Error::Infeasible { .. } | Error::RateTooSmall { .. } => EXIT_INFEASIBLE,
        _ => EXIT_CONFIG,
    }
}

/// Exit code for an arbitrary failure; anything not raised by the library
/// (I/O, malformed files) counts as a configuration error.
pub fn exit_code_any(e: &anyhow::Error) -> u8 {
    e.chain()
        .find_map(|c| c.downcast_ref::<Error>())
        .map_or(EXIT_CONFIG, exit_code)
}
