use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

/// Predictions are clamped into `[EPS, 1 - EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct BceOutput {
    pub loss: f64,
    /// d loss / d p, already divided by the batch size.
    pub grad: Vec<f32>,
}

fn check_labels(p: &[f32], y: &[f32]) -> Result<()> {
    if p.len() != y.len() {
        return shape_err(format!("{} predictions for {} labels", p.len(), y.len()));
    }
    if p.is_empty() {
        return shape_err("empty batch");
    }
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return invalid(format!("label {bad} is not 0 or 1"));
    }
    Ok(())
}

/// Mean binary cross-entropy `-mean(y ln p + (1 - y) ln(1 - p))`.
pub fn bce_loss(p: &[f32], y: &[f32]) -> Result<BceOutput> {
    check_labels(p, y)?;
    let n = p.len() as f64;
    let mut loss = 0f64;
    let mut grad = Vec::with_capacity(p.len());
    for (&pi, &yi) in p.iter().zip(y) {
        let pc = f64::from(pi).clamp(BCE_EPS, 1.0 - BCE_EPS);
        let yi = f64::from(yi);
        loss -= yi * pc.ln() + (1.0 - yi) * (1.0 - pc).ln();
        grad.push(((pc - yi) / (pc * (1.0 - pc) * n)) as f32);
    }
    Ok(BceOutput { loss: loss / n, grad })
}

/// Gradient of mean BCE with respect to the pre-sigmoid logits, given the
/// sigmoid outputs: `(p - y) / n`. Agrees with chaining [`bce_loss`] through
/// the sigmoid derivative wherever the clamp is inactive, and stays
/// informative when the sigmoid saturates.
pub fn sigmoid_bce_logit_grad(p: &[f32], y: &[f32]) -> Result<Vec<f32>> {
    check_labels(p, y)?;
    let n = p.len() as f64;
    Ok(p.iter()
        .zip(y)
        .map(|(&pi, &yi)| ((f64::from(pi) - f64::from(yi)) / n) as f32)
        .collect())
}

/// `lambda * sum(w^2)` and its gradient `2 lambda w`.
pub fn l2_penalty(weights: &Tensor, lambda: f32) -> Result<(f64, Tensor)> {
    if !(lambda >= 0.0) {
        return invalid(format!("L2 coefficient must be >= 0, got {lambda}"));
    }
    let lam = f64::from(lambda);
    let loss = lam * weights.as_slice().iter().map(|&w| f64::from(w) * f64::from(w)).sum::<f64>();
    let grad = weights.map(|w| (2.0 * lam * f64::from(w)) as f32)?;
    Ok((loss, grad))
}
