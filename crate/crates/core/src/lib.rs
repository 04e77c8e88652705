//! Road centerline extraction from very-high-resolution imagery.
//!
//! Superpixels at several scales are classified as road or non-road with a
//! collaborative representation classifier, refined by a graph cut and a
//! shape filter, then thinned into centerlines by tensor voting,
//! non-maximum suppression and junction linking. [`pipeline`] ties the
//! stages together and [`eval`] scores the result against a reference.

pub mod centerline;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod graphcut;
pub mod io;
pub mod maxflow;
pub mod mjcr;
pub mod pipeline;
pub mod raster;
pub mod shapefilter;
pub mod superpixel;
pub mod synth;
pub mod tensorvote;

pub use config::PipelineConfig;
pub use error::{Error, Result, Stage};
pub use raster::{BinaryMask, Grid, RasterImage, ScalarField};
