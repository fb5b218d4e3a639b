use super::{Grads, Layer};
use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

fn check_lr(lr: f32) -> Result<()> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return invalid(format!("learning rate must be finite and >= 0, got {lr}"));
    }
    Ok(())
}

fn check_aligned(layers: &[Layer], grads: &[Option<Grads>]) -> Result<()> {
    if layers.len() != grads.len() {
        return shape_err(format!("{} gradient slots for {} layers", grads.len(), layers.len()));
    }
    for (i, (layer, g)) in layers.iter().zip(grads).enumerate() {
        let (Some((w, b)), Some(g)) = (layer.params(), g) else { continue };
        if w.shape() != g.weight.shape() || b.shape() != g.bias.shape() {
            return shape_err(format!(
                "layer {i}: gradient shapes {}/{} do not match parameters {}/{}",
                g.weight.shape(),
                g.bias.shape(),
                w.shape(),
                b.shape()
            ));
        }
    }
    Ok(())
}

fn descend(param: &mut Tensor, step: &[f32], lr: f32) {
    let lr = f64::from(lr);
    for (p, &g) in param.as_mut_slice().iter_mut().zip(step) {
        *p = (f64::from(*p) - lr * f64::from(g)) as f32;
    }
}

/// Plain SGD, `w <- w - lr * g`, over trainable layers. Frozen layers and
/// slots holding `None` are left untouched.
pub fn sgd_step(layers: &mut [Layer], grads: &[Option<Grads>], lr: f32) -> Result<()> {
    check_lr(lr)?;
    check_aligned(layers, grads)?;
    for (layer, g) in layers.iter_mut().zip(grads) {
        if !layer.trainable {
            continue;
        }
        if let (Some((w, b)), Some(g)) = (layer.params_mut(), g) {
            descend(w, g.weight.as_slice(), lr);
            descend(b, g.bias.as_slice(), lr);
        }
    }
    Ok(())
}

/// SGD with optional classical momentum (`v <- mu v + g`, `w <- w - lr v`).
/// With `momentum == 0` each step equals [`sgd_step`] exactly.
#[derive(Clone, Debug)]
pub struct Sgd {
    lr: f32,
    momentum: f32,
    velocity: Vec<Option<(Vec<f32>, Vec<f32>)>>,
}

impl Sgd {
    pub fn new(lr: f32, momentum: f32) -> Result<Self> {
        check_lr(lr)?;
        if !(0.0..1.0).contains(&momentum) {
            return invalid(format!("momentum must be in [0, 1), got {momentum}"));
        }
        Ok(Sgd { lr, momentum, velocity: Vec::new() })
    }

    pub fn lr(&self) -> f32 {
        self.lr
    }

    pub fn step(&mut self, layers: &mut [Layer], grads: &[Option<Grads>]) -> Result<()> {
        if self.momentum == 0.0 {
            return sgd_step(layers, grads, self.lr);
        }
        check_aligned(layers, grads)?;
        if self.velocity.len() != layers.len() {
            self.velocity = vec![None; layers.len()];
        }
        let mu = self.momentum;
        for ((layer, g), vel) in layers.iter_mut().zip(grads).zip(&mut self.velocity) {
            if !layer.trainable {
                continue;
            }
            let (Some((w, b)), Some(g)) = (layer.params_mut(), g) else { continue };
            let (vw, vb) = vel.get_or_insert_with(|| (vec![0.0; w.len()], vec![0.0; b.len()]));
            for (v, &gi) in vw.iter_mut().zip(g.weight.as_slice()) {
                *v = mu * *v + gi;
            }
            for (v, &gi) in vb.iter_mut().zip(g.bias.as_slice()) {
                *v = mu * *v + gi;
            }
            descend(w, vw, self.lr);
            descend(b, vb, self.lr);
        }
        Ok(())
    }
}
