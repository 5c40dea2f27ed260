//! Thickness-selective vessel extraction for retinal and scleral images.
//!
//! The pipeline fuses a redness-driven and a structure-driven multi-scale
//! Frangi enhancement, binarizes and cleans the result, then measures
//! vascular tortuosity on the extracted centerlines.

pub mod config;
pub mod error;
pub mod field;
pub mod raster;
pub mod frangi;
pub mod maskops;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod scalespace;
pub mod tortuosity;
pub mod vesselmaps;

pub use error::{Result, VesselError};
pub use field::{BinaryMask, ScalarField};
