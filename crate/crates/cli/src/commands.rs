use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use gwavenet::data::{augment_dataset, make_dataset, normalize_raw, split, RawArray, SplitPlan};
use gwavenet::filters::{apply_filter, fft_denoise, KernelSpec};
use gwavenet::io::{load_dataset, read_image, save_dataset, write_history, write_metrics, write_pgm, write_summary, MetricsRow};
use gwavenet::model::{extract_first_kernel, load_checkpoint, save_checkpoint, KernelKind, CONV_STAGES};
use gwavenet::tensor::{load_raw, save_raw};
use gwavenet::train::{evaluate, prepare_dataset, repeat_runs, run, Metrics};
use gwavenet::{Error, Image, Label, Network, NetworkConfig, NoiseProfile, PatchDataset, Split, TrainConfig, TrainMode};

use crate::args::{EvalArgs, FilterArgs, GenDataArgs, KernelArgs, ModelArgs, RepeatArgs, TrainArgs};
use crate::params::read_kv;

/// Exit status 1 for usage problems, 2 for data and model failures.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn with_path(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| match Failure::from(e) {
        Failure::Data(m) => Failure::Data(format!("{}: {m}", path.display())),
        u => u,
    }
}

pub fn gen_data(a: &GenDataArgs) -> Outcome {
    let mut profile = NoiseProfile::default();
    let mut pairs = match &a.profile {
        Some(p) => read_kv(p).map_err(Failure::Usage)?,
        None => Vec::new(),
    };
    for kv in &a.noise {
        let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--noise expects KEY=VALUE, got {kv:?}")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    for (k, v) in &pairs {
        profile.set(&k.replace('-', "_"), v)?;
    }
    profile.validate()?;
    if a.per_class == 0 {
        return Err(usage("--per-class must be >= 1"));
    }
    let total = 2 * a.per_class;
    let test_count = a.test_count.unwrap_or_else(|| 240.min(total / 5));
    let plan = SplitPlan { train: a.train_ratio, val: a.val_ratio, test_count };
    let mut ds = split(&make_dataset(a.seed, a.per_class, &profile)?, plan, a.seed)?;
    if a.augment {
        ds = augment_dataset(&ds)?;
    }
    save_dataset(&a.out, &ds).map_err(with_path(&a.out))?;
    println!(
        "wrote {} patches to {} (gw {}, ngw {}; train {}, val {}, test {})",
        ds.len(),
        a.out.display(),
        ds.count(None, Label::Gw),
        ds.count(None, Label::Ngw),
        ds.indices(Split::Train).len(),
        ds.indices(Split::Val).len(),
        ds.indices(Split::Test).len(),
    );
    Ok(())
}

fn parse_conv_filters(s: &str) -> Result<[usize; CONV_STAGES - 1], Failure> {
    let parsed: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--conv-filters expects integers, got {s:?}")))?;
    parsed
        .try_into()
        .map_err(|v: Vec<usize>| usage(format!("--conv-filters needs {} values, got {}", CONV_STAGES - 1, v.len())))
}

fn network_config(m: &ModelArgs, input_size: usize) -> Result<NetworkConfig, Failure> {
    let mode: TrainMode = m.config.parse()?;
    let mut config = NetworkConfig::new(m.kernel, mode)
        .with_first_layer_filters(m.first_layer_filters)
        .with_conv_filters(parse_conv_filters(&m.conv_filters)?)
        .with_dense_hidden(m.dense_hidden)
        .with_input_size(input_size);
    if let Some(kind) = &m.kernel_kind {
        config = config.with_kernel_kind(kind.parse::<KernelKind>()?);
    }
    config.dropout_rate = m.dropout;
    config.lambda_reg = m.lambda_reg;
    config.validate()?;
    Ok(config)
}

fn train_config(m: &ModelArgs) -> Result<TrainConfig, Failure> {
    let cfg = TrainConfig {
        epochs: m.epochs,
        batch_size: m.batch_size,
        lr: m.lr,
        momentum: m.momentum,
        lambda_reg: None,
        seed: m.seed,
        eval_every: m.eval_every,
        eval_train: !m.no_train_eval,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Loads the dataset and builds the configs; kapt data comes back pre-filtered.
fn setup(m: &ModelArgs) -> Result<(NetworkConfig, TrainConfig, PatchDataset), Failure> {
    let cfg = train_config(m)?;
    let data = load_dataset(&m.data).map_err(with_path(&m.data))?;
    let size = data.patch_size().map_err(with_path(&m.data))?;
    let config = network_config(m, size)?;
    let prepared = prepare_dataset(&config, &data)?;
    Ok((config, cfg, prepared))
}

fn splits_present(data: &PatchDataset) -> Vec<Split> {
    Split::ALL.into_iter().filter(|&s| !data.indices(s).is_empty()).collect()
}

pub fn train(a: &TrainArgs) -> Outcome {
    let (config, cfg, data) = setup(&a.model)?;
    let (net, history) = run(&config, &data, &cfg)?;
    let report = match &a.report_dir {
        Some(d) => d.clone(),
        None => a.out.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    if !report.as_os_str().is_empty() {
        fs::create_dir_all(&report).map_err(|e| Failure::Data(format!("{}: {e}", report.display())))?;
    }
    save_checkpoint(&net, &a.out).map_err(with_path(&a.out))?;
    let history_path = report.join("history.csv");
    write_history(&history_path, &history).map_err(with_path(&history_path))?;

    let name = config.train_mode.as_str();
    let mut rows = Vec::new();
    for s in splits_present(&data) {
        rows.push(MetricsRow { config: name, split: s, metrics: evaluate(&net, &data, s)? });
    }
    let metrics_path = report.join("metrics.csv");
    write_metrics(&metrics_path, &rows).map_err(with_path(&metrics_path))?;

    if let Some(last) = history.last() {
        println!("epochs {}  final loss {:.6}", history.epochs.len(), last.train_loss);
    }
    for r in &rows {
        println!("{:<5}  accuracy {:.4}  f1 {:.4}", r.split.as_str(), r.metrics.accuracy, r.metrics.f1);
    }
    println!("checkpoint {}", a.out.display());
    Ok(())
}

fn print_metrics(split: Split, m: &Metrics) {
    println!("{} split, {} samples", split, m.total());
    println!("              pred gw  pred ngw");
    println!("  actual gw   {:>7}  {:>8}", m.tp, m.fn_);
    println!("  actual ngw  {:>7}  {:>8}", m.fp, m.tn);
    println!("accuracy   {:.4}", m.accuracy);
    println!("precision  {:.4}", m.precision);
    println!("recall     {:.4}", m.recall);
    println!("f1         {:.4}", m.f1);
}

pub fn eval(a: &EvalArgs) -> Outcome {
    let split: Split = a.split.parse()?;
    let net = load_checkpoint(&a.ckpt).map_err(with_path(&a.ckpt))?;
    let data = load_dataset(&a.data).map_err(with_path(&a.data))?;
    let data = prepare_dataset(net.config(), &data)?;
    let metrics = evaluate(&net, &data, split).map_err(with_path(&a.data))?;
    write_metrics(&a.out, &[MetricsRow { config: net.config().train_mode.as_str(), split, metrics: metrics.clone() }])
        .map_err(with_path(&a.out))?;
    print_metrics(split, &metrics);
    Ok(())
}

fn read_input(path: &Path) -> Result<Image, Failure> {
    let is_raw = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gwt"));
    let img = if is_raw {
        let t = load_raw(path).map_err(with_path(path))?;
        normalize_raw(&RawArray::from_tensor(&t).map_err(with_path(path))?).map_err(with_path(path))?
    } else {
        read_image(path).map_err(with_path(path))?
    };
    Ok(img)
}

pub fn filter(a: &FilterArgs) -> Outcome {
    let spec: KernelSpec = a.kernel.parse()?;
    let kernel = spec.build()?;
    let mut img = read_input(&a.input)?;
    if let Some(keep) = a.fft_keep {
        img = fft_denoise(&img, keep)?;
    }
    let out = apply_filter(&img, &kernel)?;
    write_pgm(&a.out, &out).map_err(with_path(&a.out))?;
    println!("wrote {}x{} response to {}", out.height(), out.width(), a.out.display());
    Ok(())
}

pub fn kernel(a: &KernelArgs) -> Outcome {
    let (kernels, tensor) = match (&a.spec, &a.ckpt) {
        (Some(spec), _) => {
            let k = spec.parse::<KernelSpec>()?.build()?;
            let t = k.to_kernel_tensor();
            (vec![k], t)
        }
        (None, Some(path)) => {
            let net: Network = load_checkpoint(path).map_err(with_path(path))?;
            (extract_first_kernel(&net), net.first_conv().clone())
        }
        (None, None) => return Err(usage("give --spec or --ckpt")),
    };
    for (i, k) in kernels.iter().enumerate() {
        if kernels.len() > 1 {
            println!("kernel {i}");
        }
        print!("{}", k.to_grid_string(a.decimals));
    }
    if let Some(path) = &a.raw_out {
        save_raw(path, &tensor).map_err(with_path(path))?;
    }
    Ok(())
}

pub fn repeat(a: &RepeatArgs) -> Outcome {
    let (config, cfg, data) = setup(&a.model)?;
    if a.runs < 2 {
        return Err(usage("--runs must be >= 2"));
    }
    let summary = repeat_runs(|seed| Network::build(&config, seed), &data, &cfg, a.runs)?;
    let out: PathBuf = a.out.clone();
    write_summary(&out, config.train_mode.as_str(), &summary).map_err(with_path(&out))?;
    println!("{} runs of {} (seeds {:?})", a.runs, config.train_mode, summary.seeds);
    for m in &summary.metrics {
        println!("{:<15} {:.4} +/- {:.4}", m.metric, m.mean, m.std);
    }
    Ok(())
}
