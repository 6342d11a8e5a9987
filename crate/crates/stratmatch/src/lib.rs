//! File formats, configuration, reports, benchmarks and the command-line
//! front end for `stratmatch-core`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod report;

pub use stratmatch_core as core;
