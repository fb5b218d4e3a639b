use crate::error::{shape_err, Error, Result};
use crate::filters::Image;
use crate::tensor::Tensor;

/// Unnormalized radiance grid. Values can be arbitrarily small (the
/// instrument reports magnitudes around 1e-9), so they are kept as f64.
#[derive(Clone, Debug, PartialEq)]
pub struct RawArray {
    h: usize,
    w: usize,
    values: Vec<f64>,
}

impl RawArray {
    pub fn new(h: usize, w: usize, values: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 || values.len() != h * w {
            return shape_err(format!("{h}x{w} raw array with {} values", values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(RawArray { h, w, values })
    }

    /// Accepts a single-plane `[1, 1, h, w]` tensor.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.n != 1 || s.c != 1 {
            return shape_err(format!("raw array must be a single plane, got {s}"));
        }
        Self::new(s.h, s.w, t.as_slice().iter().map(|&v| f64::from(v)).collect())
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Shifts so the minimum is zero, then scales so the median lands on 0.5.
pub fn median_scale(values: &[f64]) -> Result<Vec<f64>> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = values.iter().map(|v| v - lo).collect();
    let med = median(&shifted);
    if !(med > 0.0) {
        return Err(Error::Data("median of the min-shifted array is zero".into()));
    }
    Ok(shifted.iter().map(|v| 0.5 * v / med).collect())
}

/// Empirical-CDF ranks `r / (N - 1)`, ties sharing their average rank.
pub fn ecdf_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end - 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg / (n - 1) as f64;
        }
        start = end;
    }
    ranks
}

/// Min shift, median scaling to 0.5, then rank uniformization into `[0, 1]`.
pub fn normalize_raw(a: &RawArray) -> Result<Image> {
    let scaled = median_scale(&a.values)?;
    let ranks = ecdf_ranks(&scaled);
    Image::new(a.h, a.w, ranks.into_iter().map(|v| v as f32).collect())
}
