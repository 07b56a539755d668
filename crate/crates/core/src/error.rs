use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("manifest {path}, line {line}: {msg}")]
    Manifest {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("manifest {path} contains no samples")]
    EmptyManifest { path: PathBuf },

    #[error("sample {id}: mask is {mask_w}x{mask_h} but image is {img_w}x{img_h}")]
    MaskDims {
        id: String,
        mask_w: u32,
        mask_h: u32,
        img_w: u32,
        img_h: u32,
    },

    #[error("split ratios {ratios:?} must each be positive and sum to 1")]
    BadSplitRatios { ratios: [f64; 3] },

    #[error("sample {id}: image has zero area")]
    ZeroArea { id: String },

    #[error("feature config mismatch: {msg}")]
    ConfigMismatch { msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("filter bank: {msg}")]
    FilterBank { msg: String },

    #[error("no positive samples available")]
    EmptyPositives,

    #[error("training set for attribute {attribute} contains a single class")]
    SingleClass { attribute: String },

    #[error(
        "solver did not reach tolerance {tol} after {iterations} iterations \
         (final violation {violation})"
    )]
    NoConvergence {
        tol: f64,
        iterations: usize,
        violation: f64,
    },

    #[error("calibration: {msg}")]
    Calibration { msg: String },

    #[error("node {node}: probability {p} outside (0, 1)")]
    BadProbability { node: usize, p: f64 },

    #[error("edge ({u}, {v}) has negative weight {w}; energy is not submodular")]
    NegativeEdgeWeight { u: usize, v: usize, w: f64 },

    #[error("problem has {n} nodes; exhaustive search is capped at {max}")]
    TooManyNodes { n: usize, max: usize },

    #[error("no trained model for attributes: {missing:?}")]
    MissingModels { missing: Vec<String> },

    #[error("prediction/truth key sets differ: {msg}")]
    KeyMismatch { msg: String },

    #[error("invalid parameter: {msg}")]
    InvalidParameter { msg: String },

    #[error("{path}: unrecognized or corrupt file format: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }

    pub fn manifest(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Manifest {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn config_mismatch(msg: impl Into<String>) -> Self {
        Error::ConfigMismatch { msg: msg.into() }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter { msg: msg.into() }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn stage(stage: &'static str, source: Error) -> Self {
        Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}
