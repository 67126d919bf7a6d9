//! Batch front-end: experiment configs, the reconstruction pipeline and
//! net training, shared by the `tomo` binary and the acceptance suite.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod train;

pub use config::{
    apply_overrides, default_cshm, load_config, parse_config, Algorithm, DatasetSpec,
    ExperimentConfig, GeometrySpec,
};
pub use error::CliError;
pub use pipeline::{run_pipeline, verify_inputs, Manifest, PipelineOutcome};
pub use train::{train_command, TrainJob};
