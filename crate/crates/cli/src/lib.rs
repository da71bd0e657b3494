//! File formats, configuration and experiment runners around `qdepth-core`.

pub mod config;
pub mod experiments;
pub mod io;
