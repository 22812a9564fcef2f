//! Panorama layout-consistency benchmarking toolkit.
//!
//! Equirectangular geometry and furniture-view projection, class-mask
//! consistency metrics, control-signal assembly, prompt-element masking,
//! staged data curation, and reward/expert scoring.

pub mod cli;
pub mod config;
pub mod control;
pub mod curation;
pub mod elements;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod metrics;
pub mod raster;
pub mod rng;
pub mod scoring;

pub use error::{Error, Result};
pub use raster::{ClassRaster, ClassRegistry, Panorama, Raster};
