//! Synthetic data generation, evaluation, and the end-to-end pipeline.

pub mod cache;
pub mod config;
pub mod eval;
pub mod pipeline;
pub mod predictions;
pub mod synth;

pub use config::{derive_seed, fnv1a64, load_config, parse_config_text, RunConfig};
pub use eval::{evaluate, Accuracy, EvalReport, ReportColumn};
pub use pipeline::{run_pipeline, train_attribute_model};
pub use predictions::{read_predictions, write_predictions, PredictionFile};
pub use synth::{generate_synthetic, write_dataset, SYNTH_HEIGHT, SYNTH_WIDTH};
