//! File formats, run configuration and the `crowdfilter` command line.

pub mod commands;
pub mod config;
pub mod io;
