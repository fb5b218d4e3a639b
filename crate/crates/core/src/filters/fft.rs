use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::Image;
use crate::error::{invalid, Result};

/// In-place 2-D DFT of a row-major `h x w` buffer (rows, then columns).
fn fft2(buf: &mut [Complex64], h: usize, w: usize, direction: FftDirection) {
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft(w, direction);
    let col_fft = planner.plan_fft(h, direction);
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
}

/// Removes low-amplitude spectral content.
///
/// Coefficients whose magnitude falls below the `1 - keep_fraction`
/// quantile of all magnitudes are zeroed (the DC term is always kept), the
/// spectrum is inverted and the result clamped to `[0, 1]`. Conjugate pairs
/// share a magnitude, so they are kept or dropped together and the inverse
/// stays real up to rounding.
pub fn fft_denoise(img: &Image, keep_fraction: f64) -> Result<Image> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return invalid(format!("keep_fraction must be in (0, 1], got {keep_fraction}"));
    }
    let (h, w) = (img.height(), img.width());
    if h < 2 || w < 2 {
        return invalid(format!("fft_denoise needs an image of at least 2x2, got {h}x{w}"));
    }
    let mut spectrum: Vec<Complex64> =
        img.as_slice().iter().map(|&v| Complex64::new(f64::from(v), 0.0)).collect();
    fft2(&mut spectrum, h, w, FftDirection::Forward);

    let mut mags: Vec<f64> = spectrum.iter().map(|c| c.norm()).collect();
    mags.sort_by(f64::total_cmp);
    let cut_index = (((1.0 - keep_fraction) * mags.len() as f64).floor() as usize).min(mags.len() - 1);
    let threshold = mags[cut_index];
    for (i, c) in spectrum.iter_mut().enumerate() {
        if i != 0 && c.norm() < threshold {
            *c = Complex64::new(0.0, 0.0);
        }
    }

    fft2(&mut spectrum, h, w, FftDirection::Inverse);
    let scale = 1.0 / (h * w) as f64;
    let values: Vec<f32> = spectrum.iter().map(|c| (c.re * scale) as f32).collect();
    Image::clamped(h, w, &values)
}
