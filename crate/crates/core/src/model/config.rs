use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::filters::{checkerboard, gabor, laplacian_log, sobel, GaborParams, DEFAULT_LOG_SIGMA, GABOR_ORIENTATIONS_DEG};
use crate::tensor::Matrix;

/// Kernel sizes the first layer accepts.
pub const KERNEL_SIZES: [usize; 4] = [3, 5, 7, 9];

/// Number of conv (and pool) stages.
pub const CONV_STAGES: usize = 6;

/// The four ways the first layer is set up for training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrainMode {
    /// Custom kernel injected into conv1, which keeps learning.
    Trainable,
    /// Custom kernel injected into conv1, which is frozen.
    NonTrainable,
    /// Kernel applied to the images as a filter before training; conv1 is
    /// randomly initialized and trainable.
    Kapt,
    /// No custom kernel: conv1 randomly initialized and trainable.
    Nckl,
}

impl TrainMode {
    pub const ALL: [TrainMode; 4] = [TrainMode::Trainable, TrainMode::NonTrainable, TrainMode::Kapt, TrainMode::Nckl];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Trainable => "trainable",
            TrainMode::NonTrainable => "non-trainable",
            TrainMode::Kapt => "kapt",
            TrainMode::Nckl => "nckl",
        }
    }

    /// Whether conv1 starts from the custom kernel bank.
    pub fn injects_kernel(self) -> bool {
        matches!(self, TrainMode::Trainable | TrainMode::NonTrainable)
    }

    pub fn first_layer_trainable(self) -> bool {
        self != TrainMode::NonTrainable
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "trainable" | "t" => Ok(TrainMode::Trainable),
            "non-trainable" | "nt" => Ok(TrainMode::NonTrainable),
            "kapt" | "pt" => Ok(TrainMode::Kapt),
            "nckl" | "nok" => Ok(TrainMode::Nckl),
            _ => Err(Error::Config(format!(
                "unknown train config {s:?}; expected trainable, non-trainable, kapt or nckl"
            ))),
        }
    }
}

/// How the first-layer kernel bank is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Checkerboard,
    /// Gabor kernels cycling through the five baseline orientations.
    GaborBank,
    /// Alternating Sobel x / y kernels.
    Sobel,
    /// Laplacian-of-Gaussian.
    Laplacian,
    /// Scaled-normal random initialization.
    Random,
}

impl KernelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Checkerboard => "checkerboard",
            KernelKind::GaborBank => "gabor",
            KernelKind::Sobel => "sobel",
            KernelKind::Laplacian => "laplacian",
            KernelKind::Random => "random",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "checkerboard" | "cb" => Ok(KernelKind::Checkerboard),
            "gabor" | "gabor-bank" | "gabor_bank" => Ok(KernelKind::GaborBank),
            "sobel" => Ok(KernelKind::Sobel),
            "laplacian" | "log" => Ok(KernelKind::Laplacian),
            "random" => Ok(KernelKind::Random),
            _ => Err(Error::Config(format!(
                "unknown kernel kind {s:?}; expected checkerboard, gabor, sobel, laplacian or random"
            ))),
        }
    }
}

/// Architecture and first-layer setup of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub kernel_size: usize,
    pub train_mode: TrainMode,
    pub first_layer_filters: usize,
    /// Filter counts of conv2 through conv6.
    pub conv_filters: [usize; CONV_STAGES - 1],
    pub dense_hidden: usize,
    pub dropout_rate: f32,
    /// L2 coefficient on conv2's weights.
    pub lambda_reg: f32,
    pub kernel_kind: KernelKind,
    /// Side of the square single-channel input.
    pub input_size: usize,
}

impl NetworkConfig {
    pub const DEFAULT_CONV_FILTERS: [usize; CONV_STAGES - 1] = [32, 32, 16, 16, 8];
    pub const DEFAULT_DENSE_HIDDEN: usize = 64;
    pub const DEFAULT_DROPOUT: f32 = 0.5;
    pub const DEFAULT_LAMBDA_REG: f32 = 1e-4;
    pub const DEFAULT_INPUT_SIZE: usize = 200;

    /// Defaults for the given kernel size and mode. `nckl` gets a random
    /// first layer, every other mode the checkerboard.
    pub fn new(kernel_size: usize, train_mode: TrainMode) -> Self {
        NetworkConfig {
            kernel_size,
            train_mode,
            first_layer_filters: 1,
            conv_filters: Self::DEFAULT_CONV_FILTERS,
            dense_hidden: Self::DEFAULT_DENSE_HIDDEN,
            dropout_rate: Self::DEFAULT_DROPOUT,
            lambda_reg: Self::DEFAULT_LAMBDA_REG,
            kernel_kind: if train_mode == TrainMode::Nckl { KernelKind::Random } else { KernelKind::Checkerboard },
            input_size: Self::DEFAULT_INPUT_SIZE,
        }
    }

    pub fn with_kernel_kind(mut self, kind: KernelKind) -> Self {
        self.kernel_kind = kind;
        self
    }

    pub fn with_first_layer_filters(mut self, n: usize) -> Self {
        self.first_layer_filters = n;
        self
    }

    pub fn with_conv_filters(mut self, filters: [usize; CONV_STAGES - 1]) -> Self {
        self.conv_filters = filters;
        self
    }

    pub fn with_dense_hidden(mut self, n: usize) -> Self {
        self.dense_hidden = n;
        self
    }

    pub fn with_input_size(mut self, n: usize) -> Self {
        self.input_size = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !KERNEL_SIZES.contains(&self.kernel_size) {
            return err(format!("kernel size must be one of {KERNEL_SIZES:?}, got {}", self.kernel_size));
        }
        if self.first_layer_filters == 0 || self.conv_filters.contains(&0) || self.dense_hidden == 0 {
            return err("filter and unit counts must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return err(format!("dropout rate must be in [0, 1), got {}", self.dropout_rate));
        }
        if !(self.lambda_reg >= 0.0) {
            return err(format!("lambda_reg must be >= 0, got {}", self.lambda_reg));
        }
        if self.input_size < 1 << CONV_STAGES {
            return err(format!("input size must be >= {}, got {}", 1 << CONV_STAGES, self.input_size));
        }
        match (self.train_mode, self.kernel_kind) {
            (TrainMode::Nckl, KernelKind::Random) => {}
            (TrainMode::Nckl, k) => return err(format!("nckl requires a random first layer, got kernel kind {k}")),
            (m, KernelKind::Random) => return err(format!("{m} needs a custom kernel kind, not random")),
            _ => {}
        }
        if self.kernel_kind == KernelKind::Sobel && self.kernel_size != 3 {
            return err(format!("sobel kernels are 3x3, got kernel size {}", self.kernel_size));
        }
        Ok(())
    }

    /// Kernels injected into conv1 (one per filter) or, for `kapt`, used to
    /// pre-filter the data. Empty for the random kind.
    pub fn kernel_bank(&self) -> Result<Vec<Matrix>> {
        let w = self.kernel_size;
        let n = self.first_layer_filters;
        Ok(match self.kernel_kind {
            KernelKind::Random => Vec::new(),
            KernelKind::Checkerboard => vec![checkerboard(w)?; n],
            KernelKind::GaborBank => (0..n)
                .map(|i| {
                    let deg = GABOR_ORIENTATIONS_DEG[i % GABOR_ORIENTATIONS_DEG.len()];
                    gabor(w, &GaborParams::oriented_deg(deg))
                })
                .collect::<Result<_>>()?,
            KernelKind::Sobel => {
                let (gx, gy) = sobel();
                (0..n).map(|i| if i % 2 == 0 { gx.clone() } else { gy.clone() }).collect()
            }
            KernelKind::Laplacian => vec![laplacian_log(w, DEFAULT_LOG_SIGMA)?; n],
        })
    }

    /// Kernel applied to the data in `kapt` mode: the first kernel of the bank.
    pub fn prefilter_kernel(&self) -> Result<Option<Matrix>> {
        if self.train_mode != TrainMode::Kapt {
            return Ok(None);
        }
        Ok(self.kernel_bank()?.into_iter().next())
    }

    pub fn conv_channels(&self) -> [usize; CONV_STAGES] {
        let mut out = [self.first_layer_filters; CONV_STAGES];
        out[1..].copy_from_slice(&self.conv_filters);
        out
    }

    /// Spatial side after the input and after each pool.
    pub fn spatial_trace(&self) -> Vec<usize> {
        let mut trace = vec![self.input_size];
        for _ in 0..CONV_STAGES {
            let last = *trace.last().unwrap();
            trace.push(last / 2);
        }
        trace
    }

    pub fn flatten_len(&self) -> usize {
        let side = *self.spatial_trace().last().unwrap();
        side * side * self.conv_filters[CONV_STAGES - 2]
    }

    /// Closed-form parameter count.
    ///
    /// conv1 `F1 (w^2 + 1)`; conv_i `F_i (9 F_{i-1} + 1)` for i = 2..6;
    /// dense `H (L + 1)` with `L` the flattened length; output `H + 1`.
    pub fn param_count(&self) -> usize {
        let ch = self.conv_channels();
        let w = self.kernel_size;
        let mut total = ch[0] * (w * w + 1);
        for i in 1..CONV_STAGES {
            total += ch[i] * (9 * ch[i - 1] + 1);
        }
        total + self.dense_hidden * (self.flatten_len() + 1) + self.dense_hidden + 1
    }
}
