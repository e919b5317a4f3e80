//! Normalised cross-correlation over a window of integer shifts.
//!
//! Every shift is scored over the region where the two chips overlap, with means and
//! energies of exactly that region. The cross term comes from one zero-padded FFT
//! correlation, the region statistics from summed-area tables.

use rustfft::FftDirection;

use super::fft::{fast_len, Fft2, C64};
use super::surface::{Chip, CorrelationSurface};
use crate::error::{Error, Result};

/// Summed-area table with a zero first row and column.
struct Integral {
    cols: usize,
    s: Vec<f64>,
}

impl Integral {
    fn new(chip: &Chip, f: impl Fn(f64) -> f64) -> Self {
        let cols = chip.cols + 1;
        let mut s = vec![0.0; (chip.rows + 1) * cols];
        for r in 0..chip.rows {
            let mut run = 0.0;
            for c in 0..chip.cols {
                run += f(chip.at(r, c));
                s[(r + 1) * cols + c + 1] = s[r * cols + c + 1] + run;
            }
        }
        Self { cols, s }
    }

    /// Sum over rows `r0..r1` and columns `c0..c1`.
    fn sum(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> f64 {
        let k = self.cols;
        self.s[r1 * k + c1] - self.s[r0 * k + c1] - self.s[r1 * k + c0] + self.s[r0 * k + c0]
    }
}

fn centred(chip: &Chip) -> Chip {
    let m = chip.mean();
    Chip {
        rows: chip.rows,
        cols: chip.cols,
        data: chip.data.iter().map(|v| v - m).collect(),
    }
}

/// NCC of `reference(p)` against `moving(p + d)` for every integer `d` in
/// `[-radius, radius]²`. The peak sits at the displacement of the moving content.
pub fn ncc_surface(reference: &Chip, moving: &Chip, radius: usize) -> Result<CorrelationSurface> {
    if reference.rows != moving.rows || reference.cols != moving.cols {
        return Err(Error::Precondition(format!(
            "chips differ in size: {}x{} vs {}x{}",
            reference.rows, reference.cols, moving.rows, moving.cols
        )));
    }
    let (rows, cols) = (reference.rows, reference.cols);
    if 2 * radius >= rows.min(cols) {
        return Err(Error::Precondition(format!(
            "search radius {radius} needs chips larger than {} px",
            2 * radius
        )));
    }
    reference.require_texture()?;
    moving.require_texture()?;
    let a = centred(reference);
    let b = centred(moving);

    let (mr, mc) = (fast_len(rows + radius), fast_len(cols + radius));
    let pad = |chip: &Chip| {
        let mut buf = vec![C64::new(0.0, 0.0); mr * mc];
        for r in 0..rows {
            for c in 0..cols {
                buf[r * mc + c] = C64::new(chip.at(r, c), 0.0);
            }
        }
        buf
    };
    let forward = Fft2::new(mr, mc, FftDirection::Forward);
    let mut fa = pad(&a);
    let mut fb = pad(&b);
    forward.process(&mut fa);
    forward.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x = x.conj() * y;
    }
    Fft2::new(mr, mc, FftDirection::Inverse).process(&mut fa);
    let scale = 1.0 / (mr * mc) as f64;

    let (ia, iaa) = (Integral::new(&a, |v| v), Integral::new(&a, |v| v * v));
    let (ib, ibb) = (Integral::new(&b, |v| v), Integral::new(&b, |v| v * v));
    let r = radius as isize;
    let n = 2 * radius + 1;
    let mut values = Vec::with_capacity(n * n);
    for dl in -r..=r {
        for dp in -r..=r {
            let lag = ((dl.rem_euclid(mr as isize)) as usize) * mc + dp.rem_euclid(mc as isize) as usize;
            let sab = fa[lag].re * scale;
            // reference region and its displaced twin in the moving chip
            let (r0, r1) = ((-dl).max(0) as usize, (rows as isize - dl).min(rows as isize) as usize);
            let (c0, c1) = ((-dp).max(0) as usize, (cols as isize - dp).min(cols as isize) as usize);
            let (br0, br1) = ((r0 as isize + dl) as usize, (r1 as isize + dl) as usize);
            let (bc0, bc1) = ((c0 as isize + dp) as usize, (c1 as isize + dp) as usize);
            let cnt = ((r1 - r0) * (c1 - c0)) as f64;
            let sa = ia.sum(r0, r1, c0, c1);
            let sb = ib.sum(br0, br1, bc0, bc1);
            let va = iaa.sum(r0, r1, c0, c1) - sa * sa / cnt;
            let vb = ibb.sum(br0, br1, bc0, bc1) - sb * sb / cnt;
            let den = (va * vb).sqrt();
            let v = if den > 1e-12 * cnt {
                ((sab - sa * sb / cnt) / den).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            values.push(v);
        }
    }
    Ok(CorrelationSurface {
        radius,
        rows: n,
        cols: n,
        values,
    })
}
