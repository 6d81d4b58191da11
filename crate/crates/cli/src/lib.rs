//! Front end for the elastoscan workflow: configuration, experiment setup and subcommands.

pub mod commands;
pub mod config;
pub mod run;

/// Process exit code for an error chain: 2 for input problems, 3 for a resonant frequency, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<commands::OutOfBand>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<elastoscan::Error>() {
            return match e {
                elastoscan::Error::Resonance { .. } => 3,
                elastoscan::Error::Schema(_) | elastoscan::Error::Parse { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}
