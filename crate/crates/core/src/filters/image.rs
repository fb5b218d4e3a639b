use crate::error::{invalid, shape_err, Result};
use crate::tensor::{Shape, Tensor};

/// Normalized grayscale image, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return shape_err(format!("image dimensions must be >= 1, got {height}x{width}"));
        }
        if data.len() != height * width {
            return shape_err(format!(
                "{height}x{width} image needs {} values, got {}",
                height * width,
                data.len()
            ));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return invalid(format!("pixel {i} = {} outside [0, 1]", data[i]));
        }
        Ok(Image { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    /// Clamps each value into `[0, 1]`; non-finite values are rejected.
    pub fn clamped(height: usize, width: usize, values: &[f32]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("non-finite pixel");
        }
        Self::new(height, width, values.iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    /// Min-max rescale into `[0, 1]`. A constant input maps to all zeros.
    pub fn rescaled(height: usize, width: usize, values: &[f32]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("non-finite pixel");
        }
        let (lo, hi) = values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let range = f64::from(hi) - f64::from(lo);
        let data = if range > 0.0 {
            values
                .iter()
                .map(|&v| ((f64::from(v) - f64::from(lo)) / range).clamp(0.0, 1.0) as f32)
                .collect()
        } else {
            vec![0.0; values.len()]
        };
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// `[1, 1, h, w]` tensor view.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_parts(Shape::new(1, 1, self.height, self.width), self.data.clone())
    }

    /// Copies the `size x size` window whose top-left corner is `(y, x)`.
    pub fn crop(&self, y: usize, x: usize, size: usize) -> Result<Image> {
        if y + size > self.height || x + size > self.width {
            return shape_err(format!(
                "crop {size}x{size} at ({y}, {x}) exceeds {}x{}",
                self.height, self.width
            ));
        }
        let mut data = Vec::with_capacity(size * size);
        for row in y..y + size {
            data.extend_from_slice(&self.data[row * self.width + x..row * self.width + x + size]);
        }
        Ok(Image { height: size, width: size, data })
    }
}
