//! Facial action unit recognition on synthetic image sequences.
//!
//! [`synth`] writes a seeded dataset, [`features`] turns sequences into
//! per-unit feature vectors for each experiment arm, [`run`] trains and
//! scores the detectors and [`bundle`] stores trained models.

pub mod bundle;
pub mod config;
pub mod dataset;
pub mod error;
pub mod features;
pub mod run;
pub mod synth;

pub use bundle::ModelBundle;
pub use config::PipelineConfig;
pub use dataset::Dataset;
pub use error::{PipelineError, Result};
pub use features::Method;
pub use run::{compare, eval_pipeline, train_pipeline, Comparison, Report};
pub use synth::{synth_dataset, SynthSpec};
