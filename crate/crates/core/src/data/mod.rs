//! Raw-array normalization, patch tiling, augmentation, the synthetic
//! generator, and labelled datasets with train/val/test splits.

mod patches;
mod raw;
mod synth;

pub use patches::{augment, augment_views, extract_patches, Transform};
pub use raw::{ecdf_ranks, median_scale, normalize_raw, RawArray};
pub use synth::{synth_patch, NoiseProfile, Ripple, SynthPatch};

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::filters::{apply_filter, Image};
use crate::tensor::{Matrix, Rng, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Gw,
    Ngw,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::Gw, Label::Ngw];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Gw => "gw",
            Label::Ngw => "ngw",
        }
    }

    /// Training target: 1 for `gw`, 0 for `ngw`.
    pub fn target(self) -> f32 {
        match self {
            Label::Gw => 1.0,
            Label::Ngw => 0.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gw" | "1" => Ok(Label::Gw),
            "ngw" | "0" => Ok(Label::Ngw),
            other => Err(Error::Data(format!("unknown label {other:?}, expected gw or ngw"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split {other:?}, expected train, val or test"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    Real,
    Synthetic,
    /// Derived view of the sample with the given id.
    Augmented { from: String, transform: Transform },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub label: Label,
    pub split: Option<Split>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PatchDataset {
    pub samples: Vec<Sample>,
}

impl PatchDataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        PatchDataset { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Indices of the samples tagged `split`, in dataset order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.samples[i].split == Some(split)).collect()
    }

    pub fn count(&self, split: Option<Split>, label: Label) -> usize {
        self.samples.iter().filter(|s| s.split == split && s.label == label).count()
    }

    /// Side of every patch, or an error if sizes are mixed or not square.
    pub fn patch_size(&self) -> Result<usize> {
        let first = self.samples.first().ok_or_else(|| Error::Data("empty dataset".into()))?;
        let n = first.image.height();
        for s in &self.samples {
            if s.image.height() != n || s.image.width() != n {
                return Err(Error::Data(format!(
                    "sample {} is {}x{}, expected {n}x{n}",
                    s.id,
                    s.image.height(),
                    s.image.width()
                )));
            }
        }
        Ok(n)
    }

    /// Stacks the given samples into an `[n, 1, h, w]` batch with targets.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<f32>)> {
        let first = indices.first().ok_or_else(|| Error::Data("empty batch".into()))?;
        let img = &self.samples[*first].image;
        let (h, w) = (img.height(), img.width());
        let mut data = Vec::with_capacity(indices.len() * h * w);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = &self.samples[i];
            if s.image.height() != h || s.image.width() != w {
                return Err(Error::Data(format!("sample {} has a different size", s.id)));
            }
            data.extend_from_slice(s.image.as_slice());
            targets.push(s.label.target());
        }
        Ok((Tensor::new(Shape::new(indices.len(), 1, h, w), data)?, targets))
    }
}

/// Balanced synthetic dataset. Patch `i` of each class draws from its own
/// sub-stream of `seed`, so any patch can be regenerated alone.
pub fn make_dataset(seed: u64, n_per_class: usize, profile: &NoiseProfile) -> Result<PatchDataset> {
    if n_per_class == 0 {
        return invalid("n_per_class must be >= 1");
    }
    profile.validate()?;
    let mut samples = Vec::with_capacity(2 * n_per_class);
    for (k, label) in Label::BOTH.into_iter().enumerate() {
        for i in 0..n_per_class {
            let mut rng = Rng::derive(seed, (2 * i + k) as u64);
            let patch = synth_patch(&mut rng, label, profile)?;
            samples.push(Sample {
                id: format!("{label}_{i:05}"),
                image: patch.image,
                label,
                split: None,
                provenance: Provenance::Synthetic,
            });
        }
    }
    Ok(PatchDataset::new(samples))
}

/// Split proportions: `test_count` samples are drawn first, and the rest
/// is divided `train : val`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitPlan {
    pub train: usize,
    pub val: usize,
    pub test_count: usize,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan { train: 65, val: 35, test_count: 240 }
    }
}

fn share(total: usize, num: usize, den: usize) -> usize {
    // round half up in integer arithmetic
    (2 * total * num + den) / (2 * den)
}

fn by_label(ds: &PatchDataset, pick: impl Fn(&Sample) -> bool) -> [Vec<usize>; 2] {
    let mut groups = [Vec::new(), Vec::new()];
    for (i, s) in ds.samples.iter().enumerate() {
        if pick(s) {
            groups[(s.label == Label::Ngw) as usize].push(i);
        }
    }
    groups
}

/// Tags every sample train/val/test, stratified by class. The test set is
/// drawn first; when `test_count` is odd the extra test sample is `gw`.
pub fn split(ds: &PatchDataset, plan: SplitPlan, seed: u64) -> Result<PatchDataset> {
    if plan.train + plan.val == 0 {
        return invalid("split ratio must have a positive total");
    }
    if plan.test_count >= ds.len() {
        return Err(Error::Data(format!("test_count {} must be below dataset size {}", plan.test_count, ds.len())));
    }
    let groups = by_label(ds, |_| true);
    let mut out = ds.clone();
    let mut rng = Rng::new(seed);
    for (k, mut idx) in groups.into_iter().enumerate() {
        rng.shuffle(&mut idx);
        let test = plan.test_count / 2 + if k == 0 { plan.test_count % 2 } else { 0 };
        if test > idx.len() {
            return Err(Error::Data(format!("class {} has {} samples, needs {test} for test", Label::BOTH[k], idx.len())));
        }
        let train = share(idx.len() - test, plan.train, plan.train + plan.val);
        for (j, &i) in idx.iter().enumerate() {
            let tag = if j < test {
                Split::Test
            } else if j < test + train {
                Split::Train
            } else {
                Split::Val
            };
            out.samples[i].split = Some(tag);
        }
    }
    Ok(out)
}

/// Keeps `fraction` of every (split, class) group of train and val;
/// the test split is untouched.
pub fn subsample(ds: &PatchDataset, fraction: f64, seed: u64) -> Result<PatchDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return invalid(format!("fraction {fraction} outside (0, 1]"));
    }
    let mut keep = vec![false; ds.len()];
    let mut rng = Rng::new(seed);
    for (i, s) in ds.samples.iter().enumerate() {
        if s.split == Some(Split::Test) {
            keep[i] = true;
        }
    }
    for split in [Split::Train, Split::Val] {
        for mut idx in by_label(ds, |s| s.split == Some(split)) {
            if idx.is_empty() {
                continue;
            }
            rng.shuffle(&mut idx);
            let n = ((idx.len() as f64 * fraction).round() as usize).max(1);
            for &i in &idx[..n] {
                keep[i] = true;
            }
        }
    }
    let samples = ds.samples.iter().zip(keep).filter(|(_, k)| *k).map(|(s, _)| s.clone()).collect();
    Ok(PatchDataset::new(samples))
}

/// Replaces every patch by its rescaled response to `kernel`.
pub fn prefilter_kapt(ds: &PatchDataset, kernel: &Matrix) -> Result<PatchDataset> {
    let mut out = ds.clone();
    for s in &mut out.samples {
        s.image = apply_filter(&s.image, kernel)?;
    }
    Ok(out)
}

/// Appends the distinct non-identity views of every train and val sample,
/// tagged with the source split. Test samples are never augmented.
pub fn augment_dataset(ds: &PatchDataset) -> Result<PatchDataset> {
    let mut out = ds.clone();
    for s in &ds.samples {
        if !matches!(s.split, Some(Split::Train | Split::Val)) {
            continue;
        }
        for (t, view) in augment_views(&s.image)?.into_iter().skip(1) {
            out.samples.push(Sample {
                id: format!("{}~{t}", s.id),
                image: view,
                label: s.label,
                split: s.split,
                provenance: Provenance::Augmented { from: s.id.clone(), transform: t },
            });
        }
    }
    Ok(out)
}

fn pixel_hash(img: &Image) -> u64 {
    let mut h = DefaultHasher::new();
    img.height().hash(&mut h);
    for v in img.as_slice() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Fails if a test sample, or any view derived from one, is tagged train
/// or val, or if a train/val patch is pixel-identical to a test patch.
pub fn audit_leakage(ds: &PatchDataset) -> Result<()> {
    let by_id: HashMap<&str, &Sample> = ds.samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let root_split = |s: &Sample| {
        let mut cur = s;
        let mut hops = 0;
        while let Provenance::Augmented { from, .. } = &cur.provenance {
            match by_id.get(from.as_str()) {
                Some(parent) if hops < ds.len() => cur = parent,
                _ => break,
            }
            hops += 1;
        }
        cur.split
    };
    let test_pixels: HashSet<u64> = ds
        .samples
        .iter()
        .filter(|s| s.split == Some(Split::Test))
        .map(|s| pixel_hash(&s.image))
        .collect();
    for s in &ds.samples {
        if !matches!(s.split, Some(Split::Train | Split::Val)) {
            continue;
        }
        if root_split(s) == Some(Split::Test) {
            return Err(Error::Data(format!("sample {} in {} derives from a test sample", s.id, s.split.unwrap())));
        }
        if test_pixels.contains(&pixel_hash(&s.image))
            && ds.samples.iter().any(|t| t.split == Some(Split::Test) && t.image == s.image)
        {
            return Err(Error::Data(format!("sample {} duplicates a test patch", s.id)));
        }
    }
    Ok(())
}
