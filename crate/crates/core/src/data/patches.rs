use std::fmt;

use crate::error::{invalid, shape_err, Result};
use crate::filters::Image;

/// Non-overlapping (or strided) `size x size` tiles in row-major order.
/// Trailing partial tiles are dropped.
pub fn extract_patches(img: &Image, size: usize, stride: usize) -> Result<Vec<Image>> {
    if size == 0 || stride == 0 {
        return invalid("patch size and stride must be >= 1");
    }
    if img.height() < size || img.width() < size {
        return shape_err(format!("{}x{} image is smaller than a {size}x{size} patch", img.height(), img.width()));
    }
    let rows = (img.height() - size) / stride + 1;
    let cols = (img.width() - size) / stride + 1;
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(img.crop(r * stride, c * stride, size)?);
        }
    }
    Ok(out)
}

/// Axis-aligned views used for augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Transform {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
}

impl Transform {
    pub const ALL: [Transform; 6] = [
        Transform::Identity,
        Transform::Rot90,
        Transform::Rot180,
        Transform::Rot270,
        Transform::FlipH,
        Transform::FlipV,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Transform::Identity => "id",
            Transform::Rot90 => "rot90",
            Transform::Rot180 => "rot180",
            Transform::Rot270 => "rot270",
            Transform::FlipH => "hflip",
            Transform::FlipV => "vflip",
        }
    }

    /// Applies the view to a square image. Rotations are counter-clockwise;
    /// `FlipH` mirrors left-right, `FlipV` top-bottom.
    pub fn apply(self, img: &Image) -> Result<Image> {
        let n = img.height();
        if img.width() != n {
            return shape_err(format!("augmentation needs a square patch, got {}x{}", n, img.width()));
        }
        let m = n - 1;
        Image::from_fn(n, n, |y, x| match self {
            Transform::Identity => img.get(y, x),
            Transform::Rot90 => img.get(x, m - y),
            Transform::Rot180 => img.get(m - y, m - x),
            Transform::Rot270 => img.get(m - x, y),
            Transform::FlipH => img.get(y, m - x),
            Transform::FlipV => img.get(m - y, x),
        })
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All distinct views of `patch`, identity first.
pub fn augment_views(patch: &Image) -> Result<Vec<(Transform, Image)>> {
    let mut out: Vec<(Transform, Image)> = Vec::with_capacity(6);
    for t in Transform::ALL {
        let view = t.apply(patch)?;
        if !out.iter().any(|(_, seen)| *seen == view) {
            out.push((t, view));
        }
    }
    Ok(out)
}

pub fn augment(patch: &Image) -> Result<Vec<Image>> {
    Ok(augment_views(patch)?.into_iter().map(|(_, img)| img).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(h: usize, w: usize) -> Image {
        let n = (h * w) as f32;
        Image::from_fn(h, w, |y, x| (y * w + x) as f32 / n).unwrap()
    }

    #[test]
    fn tiling_counts() {
        assert_eq!(extract_patches(&ramp(400, 600), 200, 200).unwrap().len(), 6);
        assert_eq!(extract_patches(&ramp(399, 399), 200, 200).unwrap().len(), 1);
        let one = ramp(200, 200);
        assert_eq!(extract_patches(&one, 200, 200).unwrap(), vec![one]);
        assert!(extract_patches(&ramp(199, 400), 200, 200).is_err());
        assert_eq!(extract_patches(&ramp(6, 6), 4, 2).unwrap().len(), 4);
    }

    #[test]
    fn patch_pixels_come_from_source() {
        let img = ramp(7, 9);
        let patches = extract_patches(&img, 3, 3).unwrap();
        assert_eq!(patches.len(), 6);
        for (i, p) in patches.iter().enumerate() {
            let (r, c) = (i / 3, i % 3);
            for y in 0..3 {
                for x in 0..3 {
                    assert_eq!(p.get(y, x), img.get(r * 3 + y, c * 3 + x));
                }
            }
        }
    }

    #[test]
    fn group_identities() {
        let img = ramp(5, 5);
        let mut r = img.clone();
        for _ in 0..4 {
            r = Transform::Rot90.apply(&r).unwrap();
        }
        assert_eq!(r, img);
        let twice = Transform::FlipH.apply(&Transform::FlipH.apply(&img).unwrap()).unwrap();
        assert_eq!(twice, img);
        let r90 = Transform::Rot90.apply(&img).unwrap();
        assert_eq!(Transform::Rot90.apply(&r90).unwrap(), Transform::Rot180.apply(&img).unwrap());
        assert!(augment(&ramp(4, 5)).is_err());
    }

    #[test]
    fn duplicates_removed() {
        let flat = Image::new(3, 3, vec![0.5; 9]).unwrap();
        assert_eq!(augment(&flat).unwrap().len(), 1);
        assert_eq!(augment(&ramp(4, 4)).unwrap().len(), 6);
    }

    proptest! {
        #[test]
        fn views_preserve_multiset(n in 1usize..7, seed in any::<u64>()) {
            let mut rng = crate::tensor::Rng::new(seed);
            let data: Vec<f32> = (0..n * n).map(|_| rng.uniform() as f32).collect();
            let img = Image::new(n, n, data).unwrap();
            let mut want = img.as_slice().to_vec();
            want.sort_by(f32::total_cmp);
            for view in augment(&img).unwrap() {
                let mut got = view.into_vec();
                got.sort_by(f32::total_cmp);
                prop_assert_eq!(&got, &want);
            }
        }
    }
}
