//! Command-line tools and review service.

pub mod args;
pub mod commands;
pub mod service;
pub mod session;

pub use args::Cli;
pub use commands::run;
