//! Files, configuration and the command-line front end for `heatlens-core`.

pub mod cli;
pub mod config;
pub mod descriptor;
pub mod error;
pub mod formats;
pub mod off;
pub mod suites;

pub use heatlens_core as core;
