//! Library half of the `trafficdet` binary: command implementations and the
//! constants-file parser, kept separate from argument handling so tests can
//! call them directly.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_figure6, cmd_rates, cmd_selfcheck, cmd_simulate, cmd_validate, embedded_records,
    simulate_trials, CommandError, OutputFormat, SimulatedObject, SimulatedTrial,
    EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE,
};
pub use config::{parse_constants, ConfigError, Constants};
