//! File formats, checkpoints, configuration and the command-line pipeline
//! around the `earlysib-core` models.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod jsonl;
pub mod report;
pub mod svg;
