//! Library surface of the `defer` binary: configuration loading, experiment
//! runners, and the verification suite, exposed so integration tests can
//! drive them in-process.

pub mod config;
pub mod experiments;
pub mod verify;
