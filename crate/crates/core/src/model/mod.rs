//! The network assembly: layer stack, first-layer kernel injection,
//! prediction and checkpoints.

mod checkpoint;
mod config;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_FORMAT};
pub use config::{KernelKind, NetworkConfig, TrainMode, CONV_STAGES, KERNEL_SIZES};

use crate::data::Label;
use crate::error::{shape_err, Error, Result};
use crate::nn::{ForwardCache, Grads, Layer, LayerKind, Mode};
use crate::tensor::{random_fill, Init, Matrix, Rng, Shape, Tensor};

/// Batch size used internally by [`Network::predict`].
const PREDICT_CHUNK: usize = 32;

/// Side of every conv kernel after the first layer.
const INNER_KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    config: NetworkConfig,
    seed: u64,
    steps: u64,
}

impl Network {
    /// Builds the stack
    ///
    /// `[conv1, relu, pool, conv2 (L2), relu, pool, conv3, relu, pool, conv4,
    /// relu, pool, conv5, relu, pool, conv6, relu, pool, flatten, dense, relu,
    /// dropout, dense(1), sigmoid]`.
    ///
    /// conv1 holds the configured kernel bank (or a scaled-normal draw for the
    /// random kind and for `kapt`); every other weight is Glorot-uniform and
    /// every bias zero.
    pub fn build(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let channels = config.conv_channels();
        let mut layers = Vec::with_capacity(24);
        let mut in_channels = 1;
        for (stage, &filters) in channels.iter().enumerate() {
            let k = if stage == 0 { config.kernel_size } else { INNER_KERNEL };
            let shape = Shape::new(filters, in_channels, k, k);
            let weight = if stage == 0 && config.train_mode.injects_kernel() {
                first_layer_weight(config, shape)?
            } else if stage == 0 {
                random_fill(&mut rng, shape, Init::ScaledNormal { fan_in: in_channels * k * k })?
            } else {
                glorot(&mut rng, shape, in_channels * k * k, filters * k * k)?
            };
            let mut conv = Layer::conv(weight, Tensor::zeros(Shape::new(1, 1, 1, filters))?)?;
            if stage == 0 && !config.train_mode.first_layer_trainable() {
                conv = conv.frozen();
            }
            if stage == 1 {
                conv = conv.with_l2(config.lambda_reg);
            }
            layers.push(conv);
            layers.push(Layer::relu());
            layers.push(Layer::maxpool());
            in_channels = filters;
        }
        let flat = config.flatten_len();
        layers.push(Layer::flatten());
        layers.push(dense(&mut rng, flat, config.dense_hidden)?);
        layers.push(Layer::relu());
        layers.push(Layer::dropout(config.dropout_rate)?);
        layers.push(dense(&mut rng, config.dense_hidden, 1)?);
        layers.push(Layer::sigmoid());
        Ok(Network { layers, config: config.clone(), seed, steps: 0 })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Optimizer steps applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub(crate) fn record_step(&mut self) {
        self.steps += 1;
    }

    pub(crate) fn set_steps(&mut self, steps: u64) {
        self.steps = steps;
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Conv, pool, dense and dropout layers; activations and flatten are
    /// not counted.
    pub fn counted_layers(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| {
                matches!(
                    l.kind,
                    LayerKind::Conv { .. } | LayerKind::MaxPool | LayerKind::Dense { .. } | LayerKind::Dropout { .. }
                )
            })
            .count()
    }

    pub fn input_shape(&self, n: usize) -> Shape {
        Shape::new(n, 1, self.config.input_size, self.config.input_size)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let want = self.input_shape(x.shape().n);
        if x.shape() != want {
            return shape_err(format!("network expects input {want}, got {}", x.shape()));
        }
        Ok(())
    }

    /// Full forward pass, returning the sigmoid outputs `[n, 1, 1, 1]` and
    /// one cache per layer.
    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<(Tensor, Vec<ForwardCache>)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&cur, mode, rng)?;
            caches.push(cache);
            cur = y;
        }
        Ok((cur, caches))
    }

    /// Backpropagates from the gradient at the sigmoid's input (the logit)
    /// and returns one gradient slot per layer. Frozen layers get `None`,
    /// and input gradients are skipped below the lowest trainable layer.
    pub fn backward_from_logits(&self, caches: &[ForwardCache], dlogits: &Tensor) -> Result<Vec<Option<Grads>>> {
        if caches.len() != self.layers.len() {
            return Err(Error::Shape(format!("{} caches for {} layers", caches.len(), self.layers.len())));
        }
        let last = self.layers.len() - 1;
        if !matches!(self.layers[last].kind, LayerKind::Sigmoid) {
            return shape_err("network does not end in a sigmoid");
        }
        let lowest_trainable = self
            .layers
            .iter()
            .position(|l| l.trainable && l.params().is_some())
            .unwrap_or(last);
        let mut grads = vec![None; self.layers.len()];
        let mut dy = dlogits.clone();
        for i in (lowest_trainable..last).rev() {
            let layer = &self.layers[i];
            let need_grads = layer.trainable && layer.params().is_some();
            let need_dx = i > lowest_trainable;
            let (dx, g) = layer.backward_with(&caches[i], &dy, need_dx, need_grads)?;
            grads[i] = g;
            match dx {
                Some(dx) => dy = dx,
                None => break,
            }
        }
        Ok(grads)
    }

    /// Eval-mode probabilities, one per batch entry.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<f32>> {
        self.check_input(batch)?;
        let n = batch.shape().n;
        let mut out = Vec::with_capacity(n);
        // eval mode never draws from the generator
        let mut rng = Rng::new(self.seed);
        for start in (0..n).step_by(PREDICT_CHUNK) {
            let idx: Vec<usize> = (start..(start + PREDICT_CHUNK).min(n)).collect();
            let (p, _) = self.forward(&batch.select(&idx)?, Mode::Eval, &mut rng)?;
            out.extend_from_slice(p.as_slice());
        }
        Ok(out)
    }

    pub fn first_conv(&self) -> &Tensor {
        match &self.layers[0].kind {
            LayerKind::Conv { weight, .. } => weight,
            _ => unreachable!("network always starts with a conv layer"),
        }
    }
}

fn first_layer_weight(config: &NetworkConfig, shape: Shape) -> Result<Tensor> {
    let bank = config.kernel_bank()?;
    let data: Vec<f32> = bank.iter().flat_map(|k| k.as_slice().iter().copied()).collect();
    Tensor::new(shape, data)
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
fn glorot(rng: &mut Rng, shape: Shape, fan_in: usize, fan_out: usize) -> Result<Tensor> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    random_fill(rng, shape, Init::Uniform { lo: -limit, hi: limit })
}

fn dense(rng: &mut Rng, inputs: usize, outputs: usize) -> Result<Layer> {
    let weight = glorot(rng, Shape::new(1, 1, inputs, outputs), inputs, outputs)?;
    Layer::dense(weight, Tensor::zeros(Shape::new(1, 1, 1, outputs))?)
}

/// `gw` when `p >= threshold`, otherwise `ngw`.
pub fn classify(p: f32, threshold: f32) -> Label {
    if p >= threshold {
        Label::Gw
    } else {
        Label::Ngw
    }
}

/// Current conv1 kernels, one `w x w` matrix per (filter, channel) pair.
pub fn extract_first_kernel(net: &Network) -> Vec<Matrix> {
    let w = net.first_conv();
    let s = w.shape();
    let k = s.h * s.w;
    w.as_slice()
        .chunks_exact(k)
        .map(|c| Matrix::from_parts(s.h, s.w, c.to_vec()))
        .collect()
}
