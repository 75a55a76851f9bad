//! Dihedral data augmentation and aligned patch cropping.

use dagf_core::image::Image;
use dagf_core::rng::SeedRng;
use dagf_core::Scalar;

use crate::dataset::SamplePair;
use crate::error::{HarnessError, Result};

/// Apply one of the 8 dihedral transforms: `idx = rotation * 2 + flip`,
/// rotation in quarter turns counter-clockwise, flip horizontal last.
pub fn dihedral<S: Scalar>(img: &Image<S>, idx: usize) -> Image<S> {
    let rot = (idx / 2) % 4;
    let flip = idx % 2 == 1;
    let mut cur = img.clone();
    for _ in 0..rot {
        cur = rot90(&cur);
    }
    if flip {
        cur = hflip(&cur);
    }
    cur
}

fn rot90<S: Scalar>(img: &Image<S>) -> Image<S> {
    // (y, x) -> (h-1-x, y) source mapping: counter-clockwise quarter turn.
    let mut out = Image::new(img.width, img.height, img.channels, img.range);
    for y in 0..out.height {
        for x in 0..out.width {
            for c in 0..img.channels {
                out.set(y, x, c, img.get(x, img.width - 1 - y, c));
            }
        }
    }
    out
}

fn hflip<S: Scalar>(img: &Image<S>) -> Image<S> {
    let mut out = Image::new(img.height, img.width, img.channels, img.range);
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..img.channels {
                out.set(y, x, c, img.get(y, img.width - 1 - x, c));
            }
        }
    }
    out
}

/// Random flip/rotation applied identically to guidance, ground truth, and
/// the degraded target.
pub fn augment(pair: &SamplePair, rng: &mut SeedRng) -> SamplePair {
    let idx = rng.below(8);
    augment_with(pair, idx)
}

pub fn augment_with(pair: &SamplePair, idx: usize) -> SamplePair {
    SamplePair {
        guidance: dihedral(&pair.guidance, idx),
        target_gt: dihedral(&pair.target_gt, idx),
        target_degraded: dihedral(&pair.target_degraded, idx),
        meta: pair.meta.clone(),
    }
}

/// Aligned random crop: the high-resolution crop origin is a multiple of the
/// scale factor so the degraded target crops at exactly (y/scale, x/scale).
pub fn crop_patches(pair: &SamplePair, size: usize, rng: &mut SeedRng) -> Result<SamplePair> {
    let scale = pair.meta.scale;
    let (h, w) = (pair.target_gt.height, pair.target_gt.width);
    if size > h || size > w {
        return Err(HarnessError::InvalidParameter(format!(
            "crop size {size} exceeds image {h}x{w}"
        )));
    }
    if size % scale != 0 {
        return Err(HarnessError::InvalidParameter(format!(
            "crop size {size} must be divisible by scale {scale}"
        )));
    }
    let y = scale * rng.below((h - size) / scale + 1);
    let x = scale * rng.below((w - size) / scale + 1);
    Ok(SamplePair {
        guidance: crop(&pair.guidance, y, x, size, size),
        target_gt: crop(&pair.target_gt, y, x, size, size),
        target_degraded: crop(
            &pair.target_degraded,
            y / scale,
            x / scale,
            size / scale,
            size / scale,
        ),
        meta: pair.meta.clone(),
    })
}

pub fn crop<S: Scalar>(img: &Image<S>, y0: usize, x0: usize, h: usize, w: usize) -> Image<S> {
    let mut out = Image::new(h, w, img.channels, img.range);
    for y in 0..h {
        for x in 0..w {
            for c in 0..img.channels {
                out.set(y, x, c, img.get(y0 + y, x0 + x, c));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{PairMeta, SamplePair};
    use crate::degrade::{degrade, nearest_upsample, DegradeMode};
    use dagf_core::image::ValueRange;
    use dagf_core::rng::streams;
    use dagf_core::Image32;

    fn test_pair(size: usize, scale: usize, seed: u64) -> SamplePair {
        let mut rng = SeedRng::new(seed, streams::SYNTH);
        let mut gt = Image32::new(size, size, 1, ValueRange::Unit);
        for v in gt.data.iter_mut() {
            *v = rng.uniform();
        }
        let mut guidance = Image32::new(size, size, 3, ValueRange::Unit);
        for v in guidance.data.iter_mut() {
            *v = rng.uniform();
        }
        let mut nrng = SeedRng::new(seed, streams::NOISE);
        let degraded = degrade(&gt, scale, DegradeMode::Nearest, 0.0, &mut nrng).unwrap();
        SamplePair {
            guidance,
            target_gt: gt,
            target_degraded: degraded,
            meta: PairMeta {
                scale,
                mode: DegradeMode::Nearest,
                noise_sigma: 0.0,
                source_id: "test".into(),
            },
        }
    }

    #[test]
    fn identity_transform_is_identity() {
        let pair = test_pair(16, 4, 1);
        let out = augment_with(&pair, 0);
        assert_eq!(out.target_gt.data, pair.target_gt.data);
        assert_eq!(out.guidance.data, pair.guidance.data);
    }

    #[test]
    fn double_horizontal_flip_is_identity() {
        let pair = test_pair(16, 4, 2);
        let once = dihedral(&pair.target_gt, 1);
        let twice = dihedral(&once, 1);
        assert_eq!(twice.data, pair.target_gt.data);
    }

    #[test]
    fn all_eight_variants_preserve_value_histograms() {
        let pair = test_pair(12, 4, 3);
        let mut sorted_base = pair.target_gt.data.clone();
        sorted_base.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for idx in 0..8 {
            let t = dihedral(&pair.target_gt, idx);
            let mut sorted = t.data.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(sorted, sorted_base, "variant {idx}");
            assert_eq!(t.data.len(), pair.target_gt.data.len());
        }
        // The eight variants are pairwise distinct for a generic image.
        for a in 0..8 {
            for b in (a + 1)..8 {
                let ta = dihedral(&pair.target_gt, a);
                let tb = dihedral(&pair.target_gt, b);
                assert_ne!(ta.data, tb.data, "variants {a} and {b} collide");
            }
        }
    }

    #[test]
    fn full_size_crop_is_identity_and_seeded_crops_reproduce() {
        let pair = test_pair(16, 4, 4);
        let mut rng = SeedRng::new(9, streams::CROP);
        let full = crop_patches(&pair, 16, &mut rng).unwrap();
        assert_eq!(full.target_gt.data, pair.target_gt.data);
        assert_eq!(full.target_degraded.data, pair.target_degraded.data);

        let mut r1 = SeedRng::new(11, streams::CROP);
        let mut r2 = SeedRng::new(11, streams::CROP);
        let c1 = crop_patches(&pair, 8, &mut r1).unwrap();
        let c2 = crop_patches(&pair, 8, &mut r2).unwrap();
        assert_eq!(c1.target_gt.data, c2.target_gt.data);
    }

    #[test]
    fn crop_alignment_commutes_with_nearest_upsampling() {
        let pair = test_pair(16, 4, 5);
        let mut rng = SeedRng::new(13, streams::CROP);
        let cropped = crop_patches(&pair, 8, &mut rng).unwrap();
        // upsample(degraded crop) == crop of upsample(degraded), nearest mode
        let up_of_crop = nearest_upsample(&cropped.target_degraded, 4);
        let up_full = nearest_upsample(&pair.target_degraded, 4);
        // Recover the crop origin by scanning for the matching block.
        let mut matched = false;
        for y0 in (0..=8).step_by(4) {
            for x0 in (0..=8).step_by(4) {
                let sub = crop(&up_full, y0, x0, 8, 8);
                if sub.data == up_of_crop.data && crop(&pair.target_gt, y0, x0, 8, 8).data == cropped.target_gt.data {
                    matched = true;
                }
            }
        }
        assert!(matched, "aligned crop must commute with nearest upsampling");
    }

    #[test]
    fn oversized_crop_errors() {
        let pair = test_pair(16, 4, 6);
        let mut rng = SeedRng::new(1, streams::CROP);
        assert!(crop_patches(&pair, 32, &mut rng).is_err());
    }
}
