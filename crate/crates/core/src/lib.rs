//! Transductive pedestrian attribute recognition.
//!
//! The pipeline turns pedestrian crops into binary attribute labels
//! ("has backpack", "wears hat", ...) in four stages:
//!
//! 1. [`ingest`]: tab-separated manifests naming crops, optional foreground
//!    masks, per-attribute labels, and train/verify/test splits.
//! 2. [`features`]: color and texture channels (RGB, YCbCr, hue/saturation,
//!    Gabor and Schmid filter responses) summarized as per-strip histograms.
//! 3. [`unary`]: per-attribute intersection-kernel SVMs with sigmoid
//!    calibration, giving each sample a label probability.
//! 4. [`inference`]: a k-nearest-neighbor similarity graph (Gaussian or
//!    random-forest affinities, see [`similarity`]) couples samples, and a
//!    per-attribute pairwise energy is minimized exactly by min-cut.
//!
//! Everything is deterministic given a seed: training, forest growth, and
//! graph construction produce identical results across runs on the same
//! inputs. The [`harness`] module bundles synthetic data generation,
//! evaluation, and an end-to-end pipeline used by the CLI.

pub mod error;
pub mod features;
pub mod harness;
pub mod inference;
pub mod ingest;
pub mod raster;
pub mod similarity;
pub mod unary;

pub use error::{Error, Result};
pub use features::{ExtractConfig, Extractor, FeatureVector, FilterBankConfig, Scheme};
pub use inference::{run_regime, Regime, RegimeConfig, RegimeInput, RegimeOutput};
pub use ingest::{load_manifest, save_manifest, AttributeRegistry, Label, Sample, Split};
pub use raster::{Mask, Raster};
pub use similarity::forest::{train_unsupervised_forest, ForestConfig, ForestModel};
pub use unary::{train_iksvm, TrainConfig, UnaryModel};
