//! Map projection, elevation lookup, resampling and frame georeferencing.

mod elevation;
mod georef;
mod lcc;
mod raster;
mod resample;

pub use elevation::{ElevationGrid, ElevationSource};
pub use georef::{
    footprint_bbox, footprint_grid, georeference_frame, georeference_window, BandMapping, MapGrid, PixelLocator,
    DEFAULT_NODE_STEP,
};
pub use lcc::{lcc_forward, lcc_inverse, Lcc, LccParams};
pub use raster::{GeoTransform, Raster, DEFAULT_NODATA};
pub use resample::{keys_kernel, keys_weights, resample_bicubic, BandView, ResampleStats, KEYS_A};
