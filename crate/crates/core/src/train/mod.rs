//! SGD training loop, evaluation, and repeated-run statistics.

mod metrics;
mod repeat;

pub use metrics::Metrics;
pub use repeat::{repeat_runs, repeat_runs_with_seeds, MetricSummary, RepeatSummary};

use std::time::{Duration, Instant};

use crate::data::{PatchDataset, Split};
use crate::error::{invalid, Error, Result};
use crate::model::{classify, Network, NetworkConfig};
use crate::nn::{bce_loss, l2_penalty, sigmoid_bce_logit_grad, Mode, Sgd};
use crate::tensor::{Rng, Shape, Tensor};

/// Decision threshold on the sigmoid output; `gw` is positive.
pub const THRESHOLD: f32 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub momentum: f32,
    /// Overrides the L2 coefficient of the regularized layer when set.
    pub lambda_reg: Option<f32>,
    pub seed: u64,
    /// Validation (and dropout-off train) accuracy is computed every
    /// `eval_every` epochs and always after the last one.
    pub eval_every: usize,
    /// Whether evaluation epochs also score the train split with dropout off.
    pub eval_train: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            batch_size: 128,
            lr: 0.01,
            momentum: 0.0,
            lambda_reg: None,
            seed: 0,
            eval_every: 1,
            eval_train: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return invalid("epochs, batch_size and eval_every must be >= 1");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return invalid(format!("learning rate must be finite and >= 0, got {}", self.lr));
        }
        if let Some(l) = self.lambda_reg {
            if !(l >= 0.0 && l.is_finite()) {
                return invalid(format!("lambda_reg must be finite and >= 0, got {l}"));
            }
        }
        Ok(())
    }

    fn evaluates_at(&self, epoch: usize) -> bool {
        (epoch + 1) % self.eval_every == 0 || epoch + 1 == self.epochs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean BCE over the epoch's samples plus the mean L2 penalty.
    pub train_loss: f64,
    /// Running accuracy of the training forward passes (dropout on).
    pub train_acc_dropout: f64,
    /// Train-split accuracy in eval mode (dropout off), on evaluation epochs.
    pub train_acc: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunHistory {
    pub epochs: Vec<EpochRecord>,
    pub test: Option<Metrics>,
    pub wall_time: Duration,
}

impl RunHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

fn check_input(net: &Network, data: &PatchDataset) -> Result<()> {
    let size = data.patch_size()?;
    if size != net.config().input_size {
        return Err(Error::Data(format!(
            "patches are {size}x{size}, network expects {}x{}",
            net.config().input_size,
            net.config().input_size
        )));
    }
    Ok(())
}

fn frozen_snapshot(net: &Network) -> Vec<(usize, Tensor, Tensor)> {
    net.layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trainable)
        .filter_map(|(i, l)| l.params().map(|(w, b)| (i, w.clone(), b.clone())))
        .collect()
}

fn audit_frozen(net: &Network, snapshot: &[(usize, Tensor, Tensor)]) -> Result<()> {
    for (i, w, b) in snapshot {
        let (nw, nb) = net.layers()[*i].params().expect("snapshot holds parameter layers");
        let same = |a: &Tensor, b: &Tensor| a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits());
        if !same(w, nw) || !same(b, nb) {
            return Err(Error::FrozenViolation(*i));
        }
    }
    Ok(())
}

fn accuracy(net: &Network, data: &PatchDataset, idx: &[usize]) -> Result<f64> {
    Ok(evaluate_indices(net, data, idx)?.accuracy)
}

/// Trains `net` in place on the `train` split with mini-batch SGD and
/// binary cross-entropy. The last partial batch of each epoch is kept.
///
/// Epoch `e` shuffles and draws dropout masks from sub-stream `e` of
/// `cfg.seed`, so the history depends only on the seed, config and data.
pub fn train(net: &mut Network, data: &PatchDataset, cfg: &TrainConfig) -> Result<RunHistory> {
    cfg.validate()?;
    check_input(net, data)?;
    let train_idx = data.indices(Split::Train);
    let val_idx = data.indices(Split::Val);
    if train_idx.is_empty() {
        return Err(Error::Data("train split is empty".into()));
    }
    if val_idx.is_empty() {
        return Err(Error::Data("val split is empty".into()));
    }
    if let Some(l) = cfg.lambda_reg {
        for layer in net.layers_mut() {
            if layer.l2 > 0.0 {
                layer.l2 = l;
            }
        }
    }
    let started = Instant::now();
    let snapshot = frozen_snapshot(net);
    let mut opt = Sgd::new(cfg.lr, cfg.momentum)?;
    let mut history = RunHistory::default();
    let n = train_idx.len();

    for epoch in 0..cfg.epochs {
        let mut rng = Rng::derive(cfg.seed, epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let mut sample_loss = vec![0.0f64; n];
        let mut penalty_sum = 0.0f64;
        let mut correct = 0usize;

        for chunk in order.chunks(cfg.batch_size) {
            let idx: Vec<usize> = chunk.iter().map(|&j| train_idx[j]).collect();
            let (x, y) = data.batch(&idx)?;
            let (p, caches) = net.forward(&x, Mode::Train, &mut rng)?;
            let p = p.as_slice();
            for (k, &j) in chunk.iter().enumerate() {
                sample_loss[j] = bce_loss(&p[k..k + 1], &y[k..k + 1])?.loss;
                if (p[k] >= THRESHOLD) == (y[k] == 1.0) {
                    correct += 1;
                }
            }
            let dlogits = sigmoid_bce_logit_grad(p, &y)?;
            let dlogits = Tensor::new(Shape::new(chunk.len(), 1, 1, 1), dlogits)?;
            let mut grads = net.backward_from_logits(&caches, &dlogits)?;

            let mut penalty = 0.0;
            for (layer, g) in net.layers().iter().zip(grads.iter_mut()) {
                if layer.l2 == 0.0 {
                    continue;
                }
                let Some((w, _)) = layer.params() else { continue };
                let (value, grad) = l2_penalty(w, layer.l2)?;
                penalty += value;
                if let Some(g) = g {
                    let sum: Vec<f32> = g
                        .weight
                        .as_slice()
                        .iter()
                        .zip(grad.as_slice())
                        .map(|(a, b)| (f64::from(*a) + f64::from(*b)) as f32)
                        .collect();
                    g.weight = Tensor::new(g.weight.shape(), sum)?;
                }
            }
            penalty_sum += penalty * chunk.len() as f64;
            opt.step(net.layers_mut(), &grads)?;
            net.record_step();
        }

        audit_frozen(net, &snapshot)?;
        let train_loss = sample_loss.iter().sum::<f64>() / n as f64 + penalty_sum / n as f64;
        if !train_loss.is_finite() {
            return Err(Error::Data(format!("training diverged at epoch {epoch}")));
        }
        let eval = cfg.evaluates_at(epoch);
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_acc_dropout: correct as f64 / n as f64,
            train_acc: if eval && cfg.eval_train { Some(accuracy(net, data, &train_idx)?) } else { None },
            val_acc: if eval { Some(accuracy(net, data, &val_idx)?) } else { None },
        });
    }
    history.wall_time = started.elapsed();
    Ok(history)
}

fn evaluate_indices(net: &Network, data: &PatchDataset, idx: &[usize]) -> Result<Metrics> {
    let (x, _) = data.batch(idx)?;
    let p = net.predict(&x)?;
    Ok(Metrics::from_pairs(idx.iter().zip(&p).map(|(&i, &pi)| (data.samples[i].label, classify(pi, THRESHOLD)))))
}

/// Eval-mode metrics on one split, thresholded at 0.5.
pub fn evaluate(net: &Network, data: &PatchDataset, split: Split) -> Result<Metrics> {
    check_input(net, data)?;
    let idx = data.indices(split);
    if idx.is_empty() {
        return Err(Error::Data(format!("{split} split is empty")));
    }
    evaluate_indices(net, data, &idx)
}

/// The dataset a network of this configuration trains on: `kapt` sees the
/// patches pre-filtered with its kernel, every other mode the originals.
pub fn prepare_dataset(config: &NetworkConfig, data: &PatchDataset) -> Result<PatchDataset> {
    match config.prefilter_kernel()? {
        Some(k) => crate::data::prefilter_kapt(data, &k),
        None => Ok(data.clone()),
    }
}

/// Builds, trains and scores one network on already-prepared data.
pub fn run(config: &NetworkConfig, data: &PatchDataset, cfg: &TrainConfig) -> Result<(Network, RunHistory)> {
    let mut net = Network::build(config, cfg.seed)?;
    let mut history = train(&mut net, data, cfg)?;
    if !data.indices(Split::Test).is_empty() {
        history.test = Some(evaluate(&net, data, Split::Test)?);
    }
    Ok((net, history))
}
