//! Task service, HTTP client and command-line front end.

pub mod api;
pub mod cli;
pub mod client;
pub mod config;
