//! Command-line entry points and the HTTP service for AOP-Smart.

pub mod cli;
pub mod server;
