//! File formats, experiment harness and command-line front end for
//! `gstds-core`.

pub mod cli;
pub mod config;
pub mod export;
pub mod format;
pub mod harness;
pub mod synth;
