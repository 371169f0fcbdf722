//! Data input and output, seeded simulation experiments and the
//! command-line driver for sparse composite likelihood estimation.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod format;
pub mod report;
pub mod simulate;
