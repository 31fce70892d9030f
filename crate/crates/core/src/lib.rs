//! Urban scene mapping pipeline: planned/unplanned classification, object
//! detection, EXIF geolocation and per-image record export.

pub mod datasets;
pub mod detector;
pub mod geo;
pub mod raster;
pub mod records;
pub mod slumsnet;
