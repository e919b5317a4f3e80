//! Image-domain shift estimation: masked normalised cross-correlation with biquadratic
//! subpixel refinement for band-to-band registration, and phase correlation with a
//! peak-ratio confidence for frame-to-frame alignment.

mod bbr;
mod fft;
mod ncc;
mod peak;
mod phase;
mod surface;

pub use bbr::{
    bbr_estimate_and_correct, estimate_band_shifts, shift_band, weighted_median, BandRegistration, BandStatus,
    BbrConfig, BbrResult,
};
pub use ncc::ncc_surface;
pub use peak::{biquadratic_offset, subpixel_peak, SubpixelPeak};
pub use phase::{peak_ratio, phase_correlate, ShiftEstimate, CONFIDENCE_RATIO, PEAK_EXCLUSION_HALF};
pub use surface::{Chip, CorrelationSurface};

/// Shift estimate from NCC with subpixel refinement and a peak-ratio confidence.
pub fn ncc_estimate(reference: &Chip, moving: &Chip, radius: usize) -> crate::Result<ShiftEstimate> {
    let surface = ncc_surface(reference, moving, radius)?;
    let peak = subpixel_peak(&surface)?;
    let (r, c) = surface.argmax();
    let ratio = peak_ratio(surface.at(r, c), surface.max_outside(r, c, PEAK_EXCLUSION_HALF));
    Ok(ShiftEstimate::new(peak.d_line, peak.d_pixel, ratio))
}
