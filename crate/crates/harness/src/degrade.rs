//! Degradation synthesis and the resampling helpers around it.

use dagf_core::image::{Image, ValueRange};
use dagf_core::resample::ResizeMode;
use dagf_core::rng::SeedRng;
use dagf_core::{Image32, Scalar};

use crate::error::{HarnessError, Result};

/// Downsampling operator for degradation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegradeMode {
    Nearest,
    Bicubic,
}

impl DegradeMode {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "nearest" => Some(Self::Nearest),
            "bicubic" => Some(Self::Bicubic),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Nearest => "nearest",
            Self::Bicubic => "bicubic",
        }
    }

    fn resize_mode(&self) -> ResizeMode {
        match self {
            Self::Nearest => ResizeMode::Nearest,
            Self::Bicubic => ResizeMode::Bicubic,
        }
    }
}

/// Gaussian noise level expressed on the byte ([0,255]) scale, converted to
/// the image's own range.
fn sigma_in_image_units<S: Scalar>(img: &Image<S>, noise_sigma: f64) -> f64 {
    match img.range {
        ValueRange::Unit => noise_sigma / 255.0,
        ValueRange::Byte => noise_sigma,
        // Metric images take the sigma as-is in value units.
        ValueRange::Metric => noise_sigma,
    }
}

/// Downsample by `scale` with the chosen operator, then add zero-mean
/// Gaussian noise with the given byte-scale standard deviation (0 disables),
/// clamped to the image's valid range.
pub fn degrade<S: Scalar>(
    gt: &Image<S>,
    scale: usize,
    mode: DegradeMode,
    noise_sigma: f64,
    rng: &mut SeedRng,
) -> Result<Image<S>> {
    if scale < 1 {
        return Err(HarnessError::InvalidParameter("scale must be >= 1".into()));
    }
    if gt.height % scale != 0 || gt.width % scale != 0 {
        return Err(HarnessError::InvalidParameter(format!(
            "{}x{} not divisible by scale {scale}",
            gt.height, gt.width
        )));
    }
    if noise_sigma < 0.0 {
        return Err(HarnessError::InvalidParameter("noise sigma must be >= 0".into()));
    }
    let mut low = gt.resize(gt.height / scale, gt.width / scale, mode.resize_mode());
    if noise_sigma > 0.0 {
        let sigma = sigma_in_image_units(gt, noise_sigma);
        let bounds = gt.range.bounds();
        for v in low.data.iter_mut() {
            let noisy = v.to_f64s() + rng.normal::<f64>(sigma);
            let clamped = match bounds {
                Some((lo, hi)) => noisy.clamp(lo, hi),
                None => noisy,
            };
            *v = S::from_f64(clamped);
        }
    }
    Ok(low)
}

/// Bicubic upsampling back to full resolution; also the bicubic baseline.
pub fn upsample_input<S: Scalar>(lr: &Image<S>, scale: usize) -> Image<S> {
    lr.resize(lr.height * scale, lr.width * scale, ResizeMode::Bicubic)
}

/// Nearest-neighbour upsampling (baseline and alignment checks).
pub fn nearest_upsample<S: Scalar>(lr: &Image<S>, scale: usize) -> Image<S> {
    lr.resize(lr.height * scale, lr.width * scale, ResizeMode::Nearest)
}

/// Replicate a single-channel guidance image to three channels; 3-channel
/// guidance passes through.
pub fn guidance_expand(g: &Image32) -> Result<Image32> {
    match g.channels {
        3 => Ok(g.clone()),
        1 => {
            let plane = g.plane(0);
            Ok(Image::from_planes(g.height, g.width, g.range, &[plane.clone(), plane.clone(), plane])?)
        }
        c => Err(HarnessError::InvalidParameter(format!(
            "guidance must have 1 or 3 channels, got {c}"
        ))),
    }
}
