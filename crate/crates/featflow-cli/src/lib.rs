//! Configuration parsing, snapshot files, and command runners behind the
//! `featflow` binary.

pub mod config;
pub mod runner;
pub mod snapshot;
