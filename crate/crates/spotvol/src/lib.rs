//! File formats, ingestion, pipeline orchestration and the validation suite
//! around `spotvol-core`.

pub mod config;
pub mod formats;
pub mod ingest;
pub mod pipeline;
pub mod validation;

pub use config::PipelineConfig;
pub use pipeline::{run_pipeline, run_stage, Stage, StageError};
