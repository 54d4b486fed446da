//! Configuration, artifact files and the staged driver behind the
//! `hybridscat` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod pipeline;

pub use config::{parse_config, parse_config_str, ConfigError, PipelineConfig};
pub use pipeline::{run_pipeline, Manifest, PipelineError, RunOptions, Stage};
