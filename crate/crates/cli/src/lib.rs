//! Command-line front end for `discrete-anm`: CSV ingestion, dataset
//! download, simulation suites and report emission.

use std::fmt;

use discrete_anm::AnmError;

pub mod commands;
pub mod fetch;
pub mod input;
pub mod report;

pub use commands::{run, Cli};

/// Marks an error as the caller's fault (exit code 1) rather than the
/// data's (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl UsageError {
    pub fn new(msg: impl Into<String>) -> Self {
        UsageError(msg.into())
    }

    pub fn from_anm(e: AnmError) -> anyhow::Error {
        UsageError(e.to_string()).into()
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}
