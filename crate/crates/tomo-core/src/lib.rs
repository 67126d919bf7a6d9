//! Shared domain types for the reconstruction pipeline: images, sinograms,
//! the sparse projection operator, the error type, the four quality
//! metrics and the sequential/parallel execution switch.
//!
//! Data-parallel loops go through [`exec::Exec`]. With the `parallel`
//! feature (default) they run on rayon; without it every path is
//! sequential. Results never depend on the schedule.

pub mod error;
pub mod exec;
pub mod image;
pub mod metrics;
pub mod operator;
pub mod sparse;

pub use error::{Error, Result};
pub use exec::Exec;
pub use image::{Image, MaterialParams, Sinogram};
pub use metrics::MetricReport;
pub use operator::SparseOperator;
