//! Library side of the `stfcache` binary: configs, commands and the
//! CSV/JSON readers and writers.

pub mod commands;
pub mod config;
pub mod output;
