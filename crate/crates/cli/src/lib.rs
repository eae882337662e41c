//! Batch front end for `grainflow`: config files, output formats and the
//! `run`, `verify`, `sweep-nu` and `probe-contraction` commands.

pub mod commands;
pub mod config;
pub mod output;
