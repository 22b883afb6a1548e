//! Scenario-driven front end for the quasibell library.
//!
//! A run is described by one TOML file: the task to perform, the physical
//! parameters, and the scan axis. The binary parses and validates the file,
//! dispatches the matching task runner, and writes CSV (and for phase-space
//! snapshots, binary grid) artifacts with full provenance metadata. Outputs
//! are deterministic: the same scenario file always produces the same bytes.

pub mod config;
pub mod output;
pub mod tasks;
