//! Configuration, file formats and the experiment drivers used by the
//! `rheoflow` binary.

pub mod commands;
pub mod config;
pub mod fieldio;
pub mod svg;
pub mod verify;

pub use commands::{
    cmd_convergence, cmd_defect_study, cmd_relative_energy, cmd_simulate, cmd_verify,
    ConvergencePlan, Manifest,
};
pub use config::{parse_config, parse_str, RunConfig};
pub use fieldio::{read_field, write_field, FieldData};
