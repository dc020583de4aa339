//! Command line and HTTP service around the simulacra pipelines.

pub mod gate;
pub mod provider;
pub mod runs;
pub mod server;
mod ui;
