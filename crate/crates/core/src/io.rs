//! On-disk formats: binary PGM images, dataset directories with label and
//! split manifests, and the CSV reports.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, DynamicImage, ImageEncoder};

use crate::data::{Label, PatchDataset, Provenance, Sample, Split};
use crate::error::{Error, Result};
use crate::filters::Image;
use crate::train::{Metrics, RepeatSummary, RunHistory};

/// Reads an 8- or 16-bit grayscale image (PGM, or PNG), mapping sample
/// values linearly onto `[0, 1]`.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|v| f32::from(v) / 255.0).collect(),
        DynamicImage::ImageLuma16(g) => g.into_raw().into_iter().map(|v| f32::from(v) / 65535.0).collect(),
        other => {
            return Err(Error::Data(format!("{} is {:?}, expected 8- or 16-bit grayscale", path.display(), other.color())))
        }
    };
    Image::new(h, w, data)
}

/// Quantizes to 8 bits (`round(v * 255)`).
pub fn quantize(img: &Image) -> Vec<u8> {
    img.as_slice().iter().map(|&v| (f64::from(v) * 255.0).round() as u8).collect()
}

/// Writes a binary 8-bit PGM.
pub fn write_pgm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&quantize(img), img.width() as u32, img.height() as u32, ColorType::L8)?;
    out.flush()?;
    Ok(())
}

const SPLITS_FILE: &str = "splits.csv";
const LABELS_FILE: &str = "labels.csv";

fn rel_name(label: Label, id: &str) -> String {
    format!("{label}/{id}.pgm")
}

/// Writes `<root>/gw/*.pgm`, `<root>/ngw/*.pgm` and `splits.csv` for every
/// sample that has a split tag. Returns the number of images written.
pub fn save_dataset(root: impl AsRef<Path>, ds: &PatchDataset) -> Result<usize> {
    let root = root.as_ref();
    for label in Label::BOTH {
        fs::create_dir_all(root.join(label.as_str()))?;
    }
    let mut splits = csv::Writer::from_path(root.join(SPLITS_FILE))?;
    splits.write_record(["filename", "split"])?;
    for s in &ds.samples {
        let name = rel_name(s.label, &s.id);
        write_pgm(root.join(&name), &s.image)?;
        if let Some(split) = s.split {
            splits.write_record([name.as_str(), split.as_str()])?;
        }
    }
    splits.flush()?;
    Ok(ds.len())
}

fn read_manifest(path: &Path) -> Result<Option<HashMap<String, String>>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut map = HashMap::new();
    for row in reader.records() {
        let row = row?;
        let (Some(name), Some(value)) = (row.get(0), row.get(1)) else {
            return Err(Error::Data(format!("{}: rows need two columns", path.display())));
        };
        map.insert(name.trim().to_string(), value.trim().to_string());
    }
    Ok(Some(map))
}

fn lookup<'a>(map: &'a HashMap<String, String>, rel: &str, file: &str) -> Option<&'a String> {
    map.get(rel).or_else(|| map.get(file))
}

fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads a dataset directory. Labels come from the class directory unless
/// `labels.csv` lists the file; splits come from `splits.csv` when present.
/// Manifest keys may be the path relative to `root` or the bare file name.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<PatchDataset> {
    let root = root.as_ref();
    let labels = read_manifest(&root.join(LABELS_FILE))?;
    let splits = read_manifest(&root.join(SPLITS_FILE))?;
    let mut samples = Vec::new();
    for label in Label::BOTH {
        for path in pgm_files(&root.join(label.as_str()))? {
            let file = path.file_name().and_then(|f| f.to_str()).unwrap_or_default().to_string();
            let rel = format!("{label}/{file}");
            let label = match labels.as_ref().and_then(|m| lookup(m, &rel, &file)) {
                Some(l) => l.parse()?,
                None => label,
            };
            let split = match splits.as_ref().and_then(|m| lookup(m, &rel, &file)) {
                Some(s) => Some(s.parse::<Split>()?),
                None => None,
            };
            let id = path.file_stem().and_then(|f| f.to_str()).unwrap_or_default().to_string();
            samples.push(Sample { id, image: read_image(&path)?, label, split, provenance: Provenance::Real });
        }
    }
    if samples.is_empty() {
        return Err(Error::Data(format!("no .pgm files under {}/gw or {}/ngw", root.display(), root.display())));
    }
    Ok(PatchDataset::new(samples))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `epoch,train_loss,train_acc,val_acc,train_acc_dropout`; accuracies are
/// empty on epochs without an evaluation.
pub fn write_history(path: impl AsRef<Path>, history: &RunHistory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "train_acc", "val_acc", "train_acc_dropout"])?;
    for e in &history.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            opt(e.train_acc),
            opt(e.val_acc),
            e.train_acc_dropout.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub struct MetricsRow<'a> {
    pub config: &'a str,
    pub split: Split,
    pub metrics: Metrics,
}

pub fn write_metrics(path: impl AsRef<Path>, rows: &[MetricsRow<'_>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["config", "split", "tp", "fp", "fn", "tn", "accuracy", "precision", "recall", "f1"])?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.config.to_string(),
            r.split.to_string(),
            m.tp.to_string(),
            m.fp.to_string(),
            m.fn_.to_string(),
            m.tn.to_string(),
            m.accuracy.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: impl AsRef<Path>, config: &str, summary: &RepeatSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["config", "metric", "mean", "std"])?;
    for m in &summary.metrics {
        w.write_record([config.to_string(), m.metric.to_string(), m.mean.to_string(), m.std.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
