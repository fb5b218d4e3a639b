use super::{evaluate, train, Metrics, TrainConfig};
use crate::data::{PatchDataset, Split};
use crate::error::{invalid, Result};
use crate::model::Network;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSummary {
    pub metric: &'static str,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub std: f64,
}

impl MetricSummary {
    pub fn new(metric: &'static str, values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MetricSummary { metric, values, mean, std }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepeatSummary {
    pub seeds: Vec<u64>,
    pub runs: Vec<[Metrics; 3]>,
    pub metrics: Vec<MetricSummary>,
}

impl RepeatSummary {
    pub fn get(&self, metric: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == metric)
    }
}

/// Trains one network per seed (`build(seed)`, then `train` with that
/// seed) and summarizes train/val/test accuracy and F1 in eval mode.
pub fn repeat_runs_with_seeds(
    build: impl Fn(u64) -> Result<Network>,
    data: &PatchDataset,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<RepeatSummary> {
    if seeds.len() < 2 {
        return invalid(format!("repeat_runs needs at least 2 runs, got {}", seeds.len()));
    }
    let has_test = !data.indices(Split::Test).is_empty();
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut net = build(seed)?;
        let run_cfg = TrainConfig { seed, eval_every: cfg.epochs, ..cfg.clone() };
        train(&mut net, data, &run_cfg)?;
        let test = if has_test { evaluate(&net, data, Split::Test)? } else { Metrics::default() };
        runs.push([evaluate(&net, data, Split::Train)?, evaluate(&net, data, Split::Val)?, test]);
    }
    let column = |k: usize, f: fn(&Metrics) -> f64| runs.iter().map(|r| f(&r[k])).collect::<Vec<f64>>();
    let mut metrics = vec![
        MetricSummary::new("train_accuracy", column(0, |m| m.accuracy)),
        MetricSummary::new("train_f1", column(0, |m| m.f1)),
        MetricSummary::new("val_accuracy", column(1, |m| m.accuracy)),
        MetricSummary::new("val_f1", column(1, |m| m.f1)),
    ];
    if has_test {
        metrics.push(MetricSummary::new("test_accuracy", column(2, |m| m.accuracy)));
        metrics.push(MetricSummary::new("test_f1", column(2, |m| m.f1)));
    }
    Ok(RepeatSummary { seeds: seeds.to_vec(), runs, metrics })
}

/// [`repeat_runs_with_seeds`] over seeds `cfg.seed + 0 .. cfg.seed + n - 1`.
pub fn repeat_runs(build: impl Fn(u64) -> Result<Network>, data: &PatchDataset, cfg: &TrainConfig, n: usize) -> Result<RepeatSummary> {
    let seeds: Vec<u64> = (0..n as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    repeat_runs_with_seeds(build, data, cfg, &seeds)
}
