//! Kernel generators (checkerboard, Gabor, Sobel, Laplacian-of-Gaussian),
//! standalone image filtering and FFT amplitude denoising.

mod fft;
mod image;

pub use self::fft::fft_denoise;
pub use self::image::Image;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::tensor::{conv2d, Matrix, Padding, Tensor};

/// Orientations, in degrees, of the Gabor baseline bank.
pub const GABOR_ORIENTATIONS_DEG: [f64; 5] = [0.0, 30.0, 60.0, 120.0, 150.0];

/// Wavelength used when a Gabor kernel is requested without one.
pub const DEFAULT_GABOR_LAMBDA: f64 = 4.0;

/// Envelope width used for the Laplacian-of-Gaussian baseline.
pub const DEFAULT_LOG_SIGMA: f64 = 1.0;

/// `w x w` binary grid with a 1 wherever `x + y` is even, i.e.
/// `K(x, y) = (x + y + 1) mod 2`.
pub fn checkerboard(w: usize) -> Result<Matrix> {
    if w == 0 {
        return invalid("checkerboard side must be >= 1");
    }
    Matrix::from_fn(w, w, |x, y| ((x + y + 1) % 2) as f32)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaborParams {
    /// Wavelength of the carrier, pixels.
    pub lambda: f64,
    /// Orientation, radians.
    pub theta: f64,
    /// Phase offset, radians.
    pub psi: f64,
    /// Envelope standard deviation, pixels.
    pub sigma: f64,
    /// Spatial aspect ratio.
    pub gamma: f64,
}

impl GaborParams {
    /// `sigma = 0.56 * lambda`, `gamma = 0.5`, `psi = 0`.
    pub fn with_defaults(lambda: f64, theta: f64) -> Self {
        GaborParams { lambda, theta, psi: 0.0, sigma: 0.56 * lambda, gamma: 0.5 }
    }

    pub fn oriented_deg(theta_deg: f64) -> Self {
        Self::with_defaults(DEFAULT_GABOR_LAMBDA, theta_deg.to_radians())
    }
}

/// Real Gabor kernel centred on the middle cell.
///
/// With `(x, y)` the column/row offsets from the centre,
/// `x' = x cos(theta) + y sin(theta)` and `y' = -x sin(theta) + y cos(theta)`,
/// each cell holds `exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2)) * cos(2 pi x' / lambda + psi)`.
pub fn gabor(size: usize, params: &GaborParams) -> Result<Matrix> {
    if size == 0 {
        return invalid("gabor side must be >= 1");
    }
    if !(params.sigma > 0.0) || !(params.lambda > 0.0) {
        return invalid(format!(
            "gabor needs sigma > 0 and lambda > 0, got sigma={} lambda={}",
            params.sigma, params.lambda
        ));
    }
    let centre = (size as f64 - 1.0) / 2.0;
    let (sin_t, cos_t) = params.theta.sin_cos();
    Matrix::from_fn(size, size, |r, c| {
        let x = c as f64 - centre;
        let y = r as f64 - centre;
        let xr = x * cos_t + y * sin_t;
        let yr = -x * sin_t + y * cos_t;
        let envelope = (-(xr * xr + params.gamma * params.gamma * yr * yr)
            / (2.0 * params.sigma * params.sigma))
            .exp();
        (envelope * (2.0 * PI * xr / params.lambda + params.psi).cos()) as f32
    })
}

/// 3x3 Sobel pair `(gx, gy)` with `gy = gx^T`.
pub fn sobel() -> (Matrix, Matrix) {
    let gx = Matrix::from_parts(3, 3, vec![-1., 0., 1., -2., 0., 2., -1., 0., 1.]);
    let gy = gx.transpose();
    (gx, gy)
}

/// Discretized Laplacian-of-Gaussian,
/// `-(1 / (pi sigma^4)) (1 - r^2 / (2 sigma^2)) exp(-r^2 / (2 sigma^2))`,
/// shifted to zero mean.
///
/// Entries are snapped to a common power-of-two grid before the residual is
/// folded into the centre cell, so the `f32` entries sum to exactly zero.
pub fn laplacian_log(w: usize, sigma: f64) -> Result<Matrix> {
    if w % 2 == 0 {
        return invalid(format!("laplacian side must be odd, got {w}"));
    }
    if !(sigma > 0.0) {
        return invalid(format!("laplacian sigma must be > 0, got {sigma}"));
    }
    let half = (w / 2) as f64;
    let s2 = sigma * sigma;
    let mut vals: Vec<f64> = (0..w * w)
        .map(|i| {
            let y = (i / w) as f64 - half;
            let x = (i % w) as f64 - half;
            let r2 = x * x + y * y;
            -(1.0 / (PI * s2 * s2)) * (1.0 - r2 / (2.0 * s2)) * (-r2 / (2.0 * s2)).exp()
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    vals.iter_mut().for_each(|v| *v -= mean);

    let peak = vals.iter().fold(0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Matrix::new(w, w, vec![0.0; w * w]);
    }
    // Multiples of `quantum` up to `2 * peak` in magnitude are exact in f32.
    let quantum = 2f64.powi(peak.log2().floor() as i32 - 23);
    let mut ticks: Vec<i64> = vals.iter().map(|v| (v / quantum).round() as i64).collect();
    let residual: i64 = ticks.iter().sum();
    ticks[w * w / 2] -= residual;
    Matrix::new(w, w, ticks.iter().map(|&t| (t as f64 * quantum) as f32).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SobelAxis {
    X,
    Y,
}

/// Declarative description of a single filter kernel.
///
/// Parses from and prints as `checkerboard:W`, `gabor:W:DEG[:LAMBDA]`,
/// `sobel:x` / `sobel:y` and `laplacian:W[:SIGMA]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    Checkerboard { size: usize },
    Gabor { size: usize, params: GaborParams },
    Sobel { axis: SobelAxis },
    Laplacian { size: usize, sigma: f64 },
}

impl KernelSpec {
    pub fn size(&self) -> usize {
        match *self {
            KernelSpec::Checkerboard { size }
            | KernelSpec::Gabor { size, .. }
            | KernelSpec::Laplacian { size, .. } => size,
            KernelSpec::Sobel { .. } => 3,
        }
    }

    pub fn build(&self) -> Result<Matrix> {
        match self {
            KernelSpec::Checkerboard { size } => checkerboard(*size),
            KernelSpec::Gabor { size, params } => gabor(*size, params),
            KernelSpec::Sobel { axis: SobelAxis::X } => Ok(sobel().0),
            KernelSpec::Sobel { axis: SobelAxis::Y } => Ok(sobel().1),
            KernelSpec::Laplacian { size, sigma } => laplacian_log(*size, *sigma),
        }
    }
}

pub const KERNEL_SPEC_USAGE: &str =
    "valid kernels: checkerboard:W (W >= 1), gabor:W:DEG[:LAMBDA], sobel:x | sobel:y, laplacian:W[:SIGMA] (W odd)";

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidArgument(format!("bad kernel spec {s:?}: {why}; {KERNEL_SPEC_USAGE}"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let size = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .ok_or_else(|| bad("missing size"))?
                .parse::<usize>()
                .map_err(|_| bad("size is not an integer"))
        };
        let real = |i: usize| -> Result<Option<f64>> {
            parts
                .get(i)
                .map(|p| p.parse::<f64>().map_err(|_| bad("expected a number")))
                .transpose()
        };
        let spec = match parts[0].to_ascii_lowercase().as_str() {
            "checkerboard" | "cb" if parts.len() == 2 => KernelSpec::Checkerboard { size: size(1)? },
            "gabor" if (3..=4).contains(&parts.len()) => {
                let deg = real(2)?.ok_or_else(|| bad("missing orientation"))?;
                let lambda = real(3)?.unwrap_or(DEFAULT_GABOR_LAMBDA);
                KernelSpec::Gabor {
                    size: size(1)?,
                    params: GaborParams::with_defaults(lambda, deg.to_radians()),
                }
            }
            "gabor" => return Err(bad("gabor needs a size and an orientation")),
            "sobel" => match parts.get(1).copied().unwrap_or("x") {
                "x" | "3" if parts.len() <= 2 => KernelSpec::Sobel { axis: SobelAxis::X },
                "y" if parts.len() == 2 => KernelSpec::Sobel { axis: SobelAxis::Y },
                _ => return Err(bad("sobel axis must be x or y")),
            },
            "laplacian" | "log" if (2..=3).contains(&parts.len()) => KernelSpec::Laplacian {
                size: size(1)?,
                sigma: real(2)?.unwrap_or(DEFAULT_LOG_SIGMA),
            },
            _ => return Err(bad("unknown kind or wrong field count")),
        };
        if spec.size() == 0 {
            return Err(bad("size must be >= 1"));
        }
        if matches!(spec, KernelSpec::Laplacian { size, .. } if size % 2 == 0) {
            return Err(bad("laplacian size must be odd"));
        }
        Ok(spec)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Checkerboard { size } => write!(f, "checkerboard:{size}"),
            KernelSpec::Gabor { size, params } => {
                write!(f, "gabor:{size}:{}:{}", params.theta.to_degrees(), params.lambda)
            }
            KernelSpec::Sobel { axis: SobelAxis::X } => write!(f, "sobel:x"),
            KernelSpec::Sobel { axis: SobelAxis::Y } => write!(f, "sobel:y"),
            KernelSpec::Laplacian { size, sigma } => write!(f, "laplacian:{size}:{sigma}"),
        }
    }
}

/// Same-padded single-channel response of `kernel` over `img`, before any
/// rescaling. Runs through [`conv2d`] with zero bias, so it matches a
/// frozen one-filter convolution layer bit for bit.
pub fn filter_response(img: &Image, kernel: &Matrix) -> Result<Tensor> {
    if kernel.rows() != kernel.cols() {
        return invalid(format!("kernel must be square, got {}x{}", kernel.rows(), kernel.cols()));
    }
    if kernel.rows() > img.height() || kernel.rows() > img.width() {
        return invalid(format!(
            "kernel {}x{} larger than image {}x{}",
            kernel.rows(),
            kernel.cols(),
            img.height(),
            img.width()
        ));
    }
    conv2d(&img.to_tensor(), &kernel.to_kernel_tensor(), &[0.0], Padding::Same)
}

/// [`filter_response`] followed by a per-image min-max rescale to `[0, 1]`.
pub fn apply_filter(img: &Image, kernel: &Matrix) -> Result<Image> {
    let response = filter_response(img, kernel)?;
    Image::rescaled(img.height(), img.width(), response.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkerboard_small_sizes() {
        assert_eq!(checkerboard(1).unwrap().as_slice(), &[1.0]);
        assert_eq!(
            checkerboard(3).unwrap().as_slice(),
            &[1., 0., 1., 0., 1., 0., 1., 0., 1.]
        );
        let k7 = checkerboard(7).unwrap();
        assert_eq!(k7.get(0, 0), 1.0);
        assert_eq!(k7.as_slice().iter().filter(|&&v| v == 1.0).count(), 25);
        assert!(checkerboard(0).is_err());
    }

    #[test]
    fn checkerboard_counts_and_symmetry() {
        for w in 1..=15usize {
            let k = checkerboard(w).unwrap();
            assert!(k.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
            let ones = k.as_slice().iter().filter(|&&v| v == 1.0).count();
            assert_eq!(ones, (w * w).div_ceil(2));
            assert_eq!(k, k.transpose());
        }
    }

    #[test]
    fn gabor_centre_and_reflection() {
        let k = gabor(7, &GaborParams::with_defaults(4.0, 0.0)).unwrap();
        assert!((k.get(3, 3) - 1.0).abs() < 1e-7);
        for r in 0..7 {
            for c in 0..7 {
                assert_eq!(k.get(r, c), k.get(6 - r, c));
            }
        }
    }

    #[test]
    fn gabor_matches_formula_per_cell() {
        let p = GaborParams { lambda: 4.0, theta: 30f64.to_radians(), psi: 0.0, sigma: 2.0, gamma: 0.5 };
        let k = gabor(7, &p).unwrap();
        for r in 0..7 {
            for c in 0..7 {
                let (x, y) = (c as f64 - 3.0, r as f64 - 3.0);
                let th = 30f64.to_radians();
                let xr = x * th.cos() + y * th.sin();
                let yr = -x * th.sin() + y * th.cos();
                let want = (-(xr * xr + 0.25 * yr * yr) / 8.0).exp() * (2.0 * PI * xr / 4.0).cos();
                assert!((f64::from(k.get(r, c)) - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gabor_rejects_bad_params() {
        let mut p = GaborParams::oriented_deg(0.0);
        p.sigma = 0.0;
        assert!(gabor(7, &p).is_err());
        assert!("gabor:7".parse::<KernelSpec>().is_err());
    }

    #[test]
    fn sobel_pair() {
        let (gx, gy) = sobel();
        for r in 0..3 {
            let s: f32 = (0..3).map(|c| gx.get(r, c)).sum();
            assert_eq!(s, 0.0);
        }
        assert_eq!(gy, gx.transpose());
    }

    #[test]
    fn sobel_on_ramp_is_eight_times_slope() {
        let slope = 0.05f32;
        let img = Image::from_fn(5, 5, |_, x| slope * x as f32).unwrap();
        let (gx, _) = sobel();
        let resp = filter_response(&img, &gx).unwrap();
        for y in 1..4 {
            for x in 1..4 {
                assert!((resp.get(0, 0, y, x) - 8.0 * slope).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn log_sums_to_zero_and_is_radial() {
        for (w, sigma) in [(7, 1.0), (5, 0.5), (9, 1.7), (3, 2.0)] {
            let k = laplacian_log(w, sigma).unwrap();
            let s: f64 = k.as_slice().iter().map(|&v| f64::from(v)).sum();
            assert!(s.abs() < 1e-9, "w={w} sum={s}");
            for r in 0..w {
                for c in 0..w {
                    assert_eq!(k.get(r, c), k.get(c, r));
                    assert_eq!(k.get(r, c), k.get(w - 1 - r, w - 1 - c));
                }
            }
        }
        assert!(laplacian_log(6, 1.0).is_err());
    }

    #[test]
    fn log_centre_is_minimum() {
        let k = laplacian_log(7, 1.0).unwrap();
        let min = k.as_slice().iter().copied().fold(f32::INFINITY, f32::min);
        assert_eq!(k.get(3, 3), min);
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("checkerboard:3".parse::<KernelSpec>().unwrap(), KernelSpec::Checkerboard { size: 3 });
        assert_eq!("sobel:y".parse::<KernelSpec>().unwrap(), KernelSpec::Sobel { axis: SobelAxis::Y });
        assert!(matches!(
            "laplacian:7".parse::<KernelSpec>().unwrap(),
            KernelSpec::Laplacian { size: 7, .. }
        ));
        for bad in ["", "checkerboard", "checkerboard:0", "laplacian:4", "blur:3", "sobel:z"] {
            let err = bad.parse::<KernelSpec>().unwrap_err().to_string();
            assert!(err.contains("valid kernels"), "{err}");
        }
        let g: KernelSpec = "gabor:7:30".parse().unwrap();
        assert_eq!(g.to_string().parse::<KernelSpec>().unwrap().size(), 7);
    }

    #[test]
    fn identity_filter_only_rescales() {
        let img = Image::from_fn(4, 4, |y, x| 0.2 + 0.05 * (y * 4 + x) as f32).unwrap();
        let out = apply_filter(&img, &checkerboard(1).unwrap()).unwrap();
        let lo = img.as_slice().iter().copied().fold(f32::INFINITY, f32::min);
        let hi = img.as_slice().iter().copied().fold(f32::NEG_INFINITY, f32::max);
        for (o, i) in out.as_slice().iter().zip(img.as_slice()) {
            assert!((o - (i - lo) / (hi - lo)).abs() < 1e-6);
        }
    }

    #[test]
    fn checkerboard_on_constant_is_constant_away_from_border() {
        let img = Image::new(20, 20, vec![0.4; 400]).unwrap();
        let out = apply_filter(&img, &checkerboard(7).unwrap()).unwrap();
        // zero padding lowers the response within 3 px of the border
        for y in 3..17 {
            for x in 3..17 {
                assert_eq!(out.get(y, x), 1.0);
            }
        }
        assert!(out.get(0, 0) < 1.0);
    }

    #[test]
    fn oversize_kernel_rejected() {
        let img = Image::new(5, 5, vec![0.0; 25]).unwrap();
        assert!(apply_filter(&img, &checkerboard(7).unwrap()).is_err());
    }
}
