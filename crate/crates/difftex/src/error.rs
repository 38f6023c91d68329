//! Error type shared across the pipeline.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by scene loading, optimization and export.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file or directory: {0}")]
    MissingPath(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("camera '{name}': non-orthonormal rotation (deviation {deviation:.3e})")]
    NonOrthonormalRotation { name: String, deviation: f64 },

    #[error("photo/camera count mismatch: {photos} photos vs {cameras} camera entries")]
    CameraCountMismatch { photos: usize, cameras: usize },

    #[error("no camera entry for photo '{0}'")]
    MissingCameraEntry(String),

    #[error("face {face}: non-planar (deviation {deviation:.3e} > {limit:.3e})")]
    NonPlanarFace {
        face: usize,
        deviation: f64,
        limit: f64,
    },

    #[error("polygon {0}: degenerate (zero area)")]
    DegeneratePolygon(usize),

    #[error("photo '{name}' ({width}x{height}) does not match camera ({cam_width}x{cam_height})")]
    PhotoSizeMismatch {
        name: String,
        width: usize,
        height: usize,
        cam_width: usize,
        cam_height: usize,
    },

    #[error("resolution mismatch: chart {chart_w}x{chart_h} vs texture {tex_w}x{tex_h}")]
    ResolutionMismatch {
        chart_w: usize,
        chart_h: usize,
        tex_w: usize,
        tex_h: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("all photos were filtered out: {0}")]
    AllPhotosFiltered(String),

    #[error("polygon {polygon}: non-finite gradient at iteration {iteration}")]
    NonFiniteGradient { polygon: usize, iteration: u64 },

    #[error("camera '{0}' lies inside the scene geometry")]
    CameraInsideGeometry(String),

    #[error("texel coincides with camera center of photo {0}")]
    DegenerateViewRay(usize),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

impl Error {
    /// True for errors caused by bad user input rather than internal failures.
    /// The CLI maps these to exit code 2, everything else to 1.
    pub fn is_invalid_input(&self) -> bool {
        !matches!(self, Error::NonFiniteGradient { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
