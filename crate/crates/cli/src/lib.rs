//! Command line front end and live-steering service for the workbench.

pub mod cli;
pub mod server;
