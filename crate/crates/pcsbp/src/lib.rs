//! Configuration, file formats, study harnesses and the command-line
//! driver for point-cloud SBP operators built by `pcsbp-core`.

pub mod checks;
pub mod config;
pub mod export;
pub mod run;
pub mod studies;
