use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "gwavenet", version, about = "Gravity-wave patch classifier with a checkerboard first layer")]
#[command(args_override_self = true, propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic dataset of PGM patches
    GenData(GenDataArgs),
    /// Train one network and write a checkpoint plus history and metrics CSVs
    Train(TrainArgs),
    /// Score a checkpoint on one split of a dataset
    Eval(EvalArgs),
    /// Filter an image with a kernel and write the rescaled response
    Filter(FilterArgs),
    /// Print a generated or learned first-layer kernel
    Kernel(KernelArgs),
    /// Train several seeds and summarize mean and spread of the metrics
    Repeat(RepeatArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output directory (gets gw/, ngw/ and splits.csv)
    #[arg(long)]
    pub out: PathBuf,
    /// Patches per class
    #[arg(long, default_value_t = 500)]
    pub per_class: usize,
    /// Seed for patch synthesis and the split
    #[arg(long, env = "GWAVENET_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Noise profile file of key=value lines
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Noise profile override KEY=VALUE, repeatable; ranges are lo,hi
    #[arg(long = "noise", value_name = "KEY=VALUE")]
    pub noise: Vec<String>,
    /// Train share of the non-test patches
    #[arg(long, default_value_t = 65)]
    pub train_ratio: usize,
    /// Validation share of the non-test patches
    #[arg(long, default_value_t = 35)]
    pub val_ratio: usize,
    /// Test patches [default: 240, capped at a fifth of the dataset]
    #[arg(long)]
    pub test_count: Option<usize>,
    /// Also write the rotated and flipped views of train and val patches
    #[arg(long)]
    pub augment: bool,
    /// key=value file with defaults for the flags above
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    /// First-layer kernel side (3, 5, 7 or 9)
    #[arg(long, default_value_t = 7)]
    pub kernel: usize,
    /// trainable, non-trainable, kapt or nckl
    #[arg(long, default_value = "trainable")]
    pub config: String,
    /// checkerboard, gabor, sobel, laplacian or random [default: random for nckl, else checkerboard]
    #[arg(long)]
    pub kernel_kind: Option<String>,
    /// Filters in conv1
    #[arg(long, default_value_t = 1)]
    pub first_layer_filters: usize,
    /// Filters of conv2..conv6, comma separated
    #[arg(long, default_value = "32,32,16,16,8")]
    pub conv_filters: String,
    /// Units in the hidden dense layer
    #[arg(long, default_value_t = 64)]
    pub dense_hidden: usize,
    /// Dropout rate after the hidden dense layer
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f32,
    /// L2 coefficient on conv2's weights
    #[arg(long, default_value_t = 1e-4)]
    pub lambda_reg: f32,
    /// Training epochs
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    /// Mini-batch size; the last partial batch is kept
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    /// SGD learning rate
    #[arg(long, default_value_t = 0.01)]
    pub lr: f32,
    /// SGD momentum
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f32,
    /// Seed for initialization, shuffling and dropout
    #[arg(long, env = "GWAVENET_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Evaluate train and val accuracy every N epochs (and after the last)
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
    /// Skip the dropout-off train accuracy on evaluation epochs
    #[arg(long)]
    pub no_train_eval: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Checkpoint path
    #[arg(long, default_value = "model.gwck")]
    pub out: PathBuf,
    /// Directory for history.csv and metrics.csv [default: the checkpoint's directory]
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
    /// key=value file with defaults for the flags above
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to score
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    /// train, val or test
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Metrics CSV path
    #[arg(long, default_value = "metrics.csv")]
    pub out: PathBuf,
    /// key=value file with defaults for the flags above
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Input image: PGM, PNG, or a raw .gwt array (normalized first)
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Kernel spec, e.g. checkerboard:7, gabor:7:30, sobel:x, laplacian:5:1.0
    #[arg(long)]
    pub kernel: String,
    /// Output PGM
    #[arg(long)]
    pub out: PathBuf,
    /// Denoise first, keeping this fraction of the strongest FFT coefficients
    #[arg(long, value_name = "FRACTION")]
    pub fft_keep: Option<f64>,
    /// key=value file with defaults for the flags above
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["spec", "ckpt"])))]
pub struct KernelArgs {
    /// Kernel spec, e.g. checkerboard:3
    #[arg(long)]
    pub spec: Option<String>,
    /// Print the learned conv1 kernels of this checkpoint instead
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Digits after the decimal point
    #[arg(long, default_value_t = 3)]
    pub decimals: usize,
    /// Also write the kernel tensor as a raw .gwt blob
    #[arg(long, value_name = "FILE")]
    pub raw_out: Option<PathBuf>,
    /// key=value file with defaults for the flags above
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RepeatArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of runs, seeds seed..seed+runs-1
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    /// Summary CSV path
    #[arg(long, default_value = "summary.csv")]
    pub out: PathBuf,
    /// key=value file with defaults for the flags above
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
}
