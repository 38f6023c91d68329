//! difftex: texture reconstruction for planar architectural proxy models.
//!
//! Given a proxy mesh of planar polygons, calibrated pinhole cameras, and the
//! photos they took, the library optimizes a per-photo, per-texel blending
//! weight field for every polygon so that the composed texture map matches
//! the photos when rendered back into them, prefers consistent near-frontal
//! viewing directions, and keeps the weight field spatially coherent.
//! Optimization runs coarse-to-fine (256 texels up to the target resolution)
//! with Adam on analytic gradients, and progressively eliminates inconsistent
//! photos and pixel contributions.

pub mod camera;
pub mod chart;
pub mod error;
pub mod grid;
pub mod losses;
pub mod metrics;
pub mod optimizer;
pub mod pipeline;
pub mod preprocess;
pub mod scene;
pub mod scene_io;
pub mod synth;
pub mod texture_field;
pub mod visibility;

pub use error::{Error, Result};
