//! Command implementations behind the `sda` binary.

pub mod commands;
pub mod config;
pub mod inputs;

pub use commands::{cmd_fit, cmd_predict, cmd_report, cmd_simulate, FitOutput, Outcome, SimulationOutput};
pub use config::RunConfig;

/// Stage name for an error chain: the core module for library errors, `input` otherwise.
pub fn error_stage(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<sda_core::SdaError>())
        .map_or("input", |e| e.module())
}
