//! Detection of buried house ruins in airborne LiDAR.
//!
//! The pipeline stages, in data-flow order:
//!
//! 1. [`ingest`]: ASCII XYZ returns and GeoJSON annotations; lowest-return
//!    reduction to bare ground.
//! 2. [`raster`]: nearest-neighbor DEM gridding and Fourier localization
//!    that strips long-wavelength terrain.
//! 3. [`segment`]: level-set contours of the local DEM, outermost-contour
//!    reduction, minimum-area bounding boxes and size/shape pre-filtering.
//! 4. [`label`]: overlap labeling against annotated footprints and
//!    train/test splitting.
//! 5. [`chips`]: fixed-size normalized image chips with widening and
//!    quarter-turn augmentation.
//! 6. [`model`]: an ensemble of scorers fused by median/min/max.
//! 7. [`eval`]: F1 and detection-error-tradeoff curves with equal error rate.
//!
//! [`synth`] generates synthetic sites with planted ground truth.

pub mod chips;
pub mod error;
pub mod eval;
pub mod geom;
pub mod ingest;
pub mod label;
pub mod model;
pub mod raster;
pub mod rng;
pub mod segment;
pub mod synth;

pub use error::{Error, Result};
pub use geom::{BBox, Point2};
pub use ingest::{AnnotationPolygon, GroundPoint, PointCloud, PointRecord};
pub use raster::{LocalizeParams, Raster, Rolloff};
