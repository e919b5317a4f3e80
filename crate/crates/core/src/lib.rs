//! Geometric processing for a geostationary scan-mirror frame camera: rigid geolocation,
//! map projection and resampling, band-to-band registration, space resection and
//! backtracking frame mosaicking, with a synthetic acquisition simulator for closed-loop
//! verification.

pub mod error;
pub mod geomodel;
pub mod mosaic;
pub mod projection;
pub mod registration;
pub mod resection;
pub mod simulator;

pub use error::{Error, Result};
