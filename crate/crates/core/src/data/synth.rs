use std::f64::consts::PI;

use super::Label;
use crate::error::{invalid, Error, Result};
use crate::filters::Image;
use crate::tensor::Rng;

/// Parameter ranges for the synthetic patch generator. Every `(lo, hi)`
/// pair is sampled uniformly.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseProfile {
    pub size: usize,
    pub background_level: (f64, f64),
    /// Amplitude of the smooth background undulation.
    pub background_amp: (f64, f64),
    /// Shortest background wavelength in pixels.
    pub background_min_wavelength: f64,
    pub pixel_noise: (f64, f64),
    pub max_lights: usize,
    pub light_amp: (f64, f64),
    pub light_sigma: (f64, f64),
    pub max_lines: usize,
    pub line_amp: (f64, f64),
    pub cloud_prob: f64,
    pub cloud_amp: (f64, f64),
    pub cloud_radius: (f64, f64),
    pub wavelength: (f64, f64),
    /// Ripple amplitude `A`; peak-to-peak is `2A`.
    pub ripple_amp: (f64, f64),
    pub envelope_sigma: (f64, f64),
}

impl Default for NoiseProfile {
    fn default() -> Self {
        NoiseProfile {
            size: 200,
            background_level: (0.35, 0.55),
            background_amp: (0.0, 0.08),
            background_min_wavelength: 120.0,
            pixel_noise: (0.1, 0.16),
            max_lights: 3,
            light_amp: (0.3, 0.8),
            light_sigma: (1.0, 3.0),
            max_lines: 2,
            line_amp: (0.05, 0.15),
            cloud_prob: 0.3,
            cloud_amp: (0.1, 0.3),
            cloud_radius: (30.0, 60.0),
            wavelength: (8.0, 40.0),
            ripple_amp: (0.05, 0.2),
            envelope_sigma: (50.0, 80.0),
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64), min: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo >= min && lo <= hi) {
        return invalid(format!("{name} range ({lo}, {hi}) must satisfy {min} <= lo <= hi"));
    }
    Ok(())
}

fn parse_range(key: &str, value: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("{key} expects LO,HI or a single number, got {value:?}"));
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    match parts[..] {
        [v] => Ok((v, v)),
        [lo, hi] => Ok((lo, hi)),
        _ => Err(bad()),
    }
}

impl NoiseProfile {
    pub const KEYS: [&'static str; 16] = [
        "size",
        "background_level",
        "background_amp",
        "background_min_wavelength",
        "pixel_noise",
        "max_lights",
        "light_amp",
        "light_sigma",
        "max_lines",
        "line_amp",
        "cloud_prob",
        "cloud_amp",
        "cloud_radius",
        "wavelength",
        "ripple_amp",
        "envelope_sigma",
    ];

    pub fn validate(&self) -> Result<()> {
        if self.size < 8 {
            return invalid(format!("patch size {} is below 8", self.size));
        }
        check_range("background_level", self.background_level, 0.0)?;
        check_range("background_amp", self.background_amp, 0.0)?;
        check_range("pixel_noise", self.pixel_noise, 0.0)?;
        check_range("light_amp", self.light_amp, 0.0)?;
        check_range("light_sigma", self.light_sigma, 1e-3)?;
        check_range("line_amp", self.line_amp, 0.0)?;
        check_range("cloud_amp", self.cloud_amp, 0.0)?;
        check_range("cloud_radius", self.cloud_radius, 1e-3)?;
        check_range("wavelength", self.wavelength, 2.0)?;
        check_range("ripple_amp", self.ripple_amp, 0.0)?;
        check_range("envelope_sigma", self.envelope_sigma, 1e-3)?;
        if !(self.background_min_wavelength > 0.0) {
            return invalid("background_min_wavelength must be positive");
        }
        if !(0.0..=1.0).contains(&self.cloud_prob) {
            return invalid(format!("cloud_prob {} outside [0, 1]", self.cloud_prob));
        }
        Ok(())
    }

    /// Sets one field from its textual form. Ranges are written `lo,hi`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || value.trim().parse::<f64>().map_err(|_| Error::Config(format!("{key} expects a number, got {value:?}")));
        let count = || value.trim().parse::<usize>().map_err(|_| Error::Config(format!("{key} expects an integer, got {value:?}")));
        match key {
            "size" => self.size = count()?,
            "background_level" => self.background_level = parse_range(key, value)?,
            "background_amp" => self.background_amp = parse_range(key, value)?,
            "background_min_wavelength" => self.background_min_wavelength = num()?,
            "pixel_noise" => self.pixel_noise = parse_range(key, value)?,
            "max_lights" => self.max_lights = count()?,
            "light_amp" => self.light_amp = parse_range(key, value)?,
            "light_sigma" => self.light_sigma = parse_range(key, value)?,
            "max_lines" => self.max_lines = count()?,
            "line_amp" => self.line_amp = parse_range(key, value)?,
            "cloud_prob" => self.cloud_prob = num()?,
            "cloud_amp" => self.cloud_amp = parse_range(key, value)?,
            "cloud_radius" => self.cloud_radius = parse_range(key, value)?,
            "wavelength" => self.wavelength = parse_range(key, value)?,
            "ripple_amp" => self.ripple_amp = parse_range(key, value)?,
            "envelope_sigma" => self.envelope_sigma = parse_range(key, value)?,
            _ => return Err(Error::Config(format!("unknown noise profile key {key:?}"))),
        }
        Ok(())
    }
}

/// Ripple parameters drawn for a `gw` patch. Coordinates are pixels, `x`
/// along columns and `y` along rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Ripple {
    pub wavelength: f64,
    pub theta: f64,
    pub phase: f64,
    pub amplitude: f64,
    pub center: (f64, f64),
    pub envelope_sigma: f64,
}

impl Ripple {
    /// Gaussian envelope weight in `[0, 1]` at pixel `(y, x)`.
    pub fn envelope(&self, y: usize, x: usize) -> f64 {
        let dy = y as f64 - self.center.0;
        let dx = x as f64 - self.center.1;
        (-(dx * dx + dy * dy) / (2.0 * self.envelope_sigma * self.envelope_sigma)).exp()
    }

    pub fn value(&self, y: usize, x: usize) -> f64 {
        let (xf, yf) = (x as f64, y as f64);
        let arg = 2.0 * PI * (xf * self.theta.cos() + yf * self.theta.sin()) / self.wavelength + self.phase;
        self.amplitude * arg.sin() * self.envelope(y, x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthPatch {
    pub image: Image,
    /// Present only for `gw` patches.
    pub ripple: Option<Ripple>,
}

fn draw(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.range(lo, hi)
    }
}

/// One synthetic patch: smooth background, pixel noise, city lights,
/// instrument lines, an optional cloud, and for `gw` an enveloped ripple.
pub fn synth_patch(rng: &mut Rng, label: Label, profile: &NoiseProfile) -> Result<SynthPatch> {
    profile.validate()?;
    let n = profile.size;
    let nf = n as f64;
    let mut field = vec![0.0f64; n * n];

    let level = draw(rng, profile.background_level);
    let mut waves = Vec::new();
    for _ in 0..2 {
        let amp = draw(rng, profile.background_amp);
        let wl = rng.range(profile.background_min_wavelength, 4.0 * profile.background_min_wavelength);
        let dir = rng.range(0.0, 2.0 * PI);
        let ph = rng.range(0.0, 2.0 * PI);
        waves.push((amp, wl, dir.cos(), dir.sin(), ph));
    }
    for y in 0..n {
        for x in 0..n {
            let (xf, yf) = (x as f64, y as f64);
            let mut v = level;
            for &(amp, wl, c, s, ph) in &waves {
                v += amp * (2.0 * PI * (xf * c + yf * s) / wl + ph).cos();
            }
            field[y * n + x] = v;
        }
    }

    if rng.uniform() < profile.cloud_prob {
        let amp = draw(rng, profile.cloud_amp);
        let r = draw(rng, profile.cloud_radius);
        let (cy, cx) = (rng.range(0.0, nf), rng.range(0.0, nf));
        for y in 0..n {
            for x in 0..n {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                field[y * n + x] += amp * (-d2 / (2.0 * r * r)).exp();
            }
        }
    }

    let lights = rng.below(profile.max_lights + 1);
    for _ in 0..lights {
        let amp = draw(rng, profile.light_amp);
        let s = draw(rng, profile.light_sigma);
        let (cy, cx) = (rng.range(0.0, nf), rng.range(0.0, nf));
        let reach = (4.0 * s).ceil() as isize;
        let (iy, ix) = (cy as isize, cx as isize);
        for y in (iy - reach).max(0)..(iy + reach + 1).min(n as isize) {
            for x in (ix - reach).max(0)..(ix + reach + 1).min(n as isize) {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                field[y as usize * n + x as usize] += amp * (-d2 / (2.0 * s * s)).exp();
            }
        }
    }

    let lines = rng.below(profile.max_lines + 1);
    for _ in 0..lines {
        let amp = draw(rng, profile.line_amp);
        let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
        let at = rng.below(n);
        let horizontal = rng.uniform() < 0.5;
        for i in 0..n {
            let idx = if horizontal { at * n + i } else { i * n + at };
            field[idx] += sign * amp;
        }
    }

    let ripple = match label {
        Label::Ngw => None,
        Label::Gw => {
            let r = Ripple {
                wavelength: draw(rng, profile.wavelength),
                theta: rng.range(0.0, PI),
                phase: rng.range(0.0, 2.0 * PI),
                amplitude: draw(rng, profile.ripple_amp),
                center: (rng.range(0.25 * nf, 0.75 * nf), rng.range(0.25 * nf, 0.75 * nf)),
                envelope_sigma: draw(rng, profile.envelope_sigma),
            };
            for y in 0..n {
                for x in 0..n {
                    field[y * n + x] += r.value(y, x);
                }
            }
            Some(r)
        }
    };

    let sigma = draw(rng, profile.pixel_noise);
    for v in field.iter_mut() {
        *v += sigma * rng.normal();
    }

    let data: Vec<f32> = field.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect();
    Ok(SynthPatch { image: Image::new(n, n, data)?, ripple })
}
