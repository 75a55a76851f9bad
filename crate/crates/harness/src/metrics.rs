//! Root-mean-square error under the two reporting conventions.

use dagf_core::{Image32, Scalar};
use dagf_core::image::Image;

use crate::error::{HarnessError, Result};

/// RMSE reporting convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RmseConvention {
    /// Values are metric depth (centimeters after `unit_scale`); RMSE is
    /// computed directly on `value * unit_scale`.
    Centimeters { unit_scale: f64 },
    /// The ground truth's value range maps linearly onto [0, 255] and the
    /// same map applies to the prediction.
    ByteRange,
}

/// Full evaluation protocol: convention plus an optional border crop.
#[derive(Debug, Clone, Copy)]
pub struct EvalProtocol {
    pub convention: RmseConvention,
    pub border_crop: usize,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol { convention: RmseConvention::ByteRange, border_crop: 0 }
    }
}

pub fn rmse<S: Scalar>(pred: &Image<S>, gt: &Image<S>, proto: &EvalProtocol) -> Result<f64> {
    if !pred.same_dims(gt) {
        return Err(HarnessError::InvalidParameter(format!(
            "rmse: prediction {}x{}x{} vs ground truth {}x{}x{}",
            pred.height, pred.width, pred.channels, gt.height, gt.width, gt.channels
        )));
    }
    let crop = proto.border_crop;
    if gt.height <= 2 * crop || gt.width <= 2 * crop {
        return Err(HarnessError::InvalidParameter(format!(
            "border crop {crop} consumes the whole {}x{} image",
            gt.height, gt.width
        )));
    }
    let (scale, offset) = match proto.convention {
        RmseConvention::Centimeters { unit_scale } => (unit_scale, 0.0),
        RmseConvention::ByteRange => {
            let (lo, hi) = gt.min_max();
            let span = hi.to_f64s() - lo.to_f64s();
            if span <= 0.0 {
                (0.0, 0.0) // constant gt: every affine map collapses, error is 0
            } else {
                (255.0 / span, -lo.to_f64s() * 255.0 / span)
            }
        }
    };
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for y in crop..gt.height - crop {
        for x in crop..gt.width - crop {
            for c in 0..gt.channels {
                let p = pred.get(y, x, c).to_f64s() * scale + offset;
                let g = gt.get(y, x, c).to_f64s() * scale + offset;
                acc += (p - g) * (p - g);
                count += 1;
            }
        }
    }
    Ok((acc / count as f64).sqrt())
}

/// RMSE on unit-range images reported in byte units (shorthand used by the
/// synthetic benchmarks).
pub fn rmse_byte(pred: &Image32, gt: &Image32) -> Result<f64> {
    rmse(pred, gt, &EvalProtocol::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use dagf_core::image::ValueRange;
    use dagf_core::rng::{streams, SeedRng};

    fn cm_proto() -> EvalProtocol {
        EvalProtocol { convention: RmseConvention::Centimeters { unit_scale: 1.0 }, border_crop: 0 }
    }

    #[test]
    fn equal_images_give_zero() {
        let mut rng = SeedRng::new(81, streams::TEST);
        let data: Vec<f64> = (0..64).map(|_| rng.uniform()).collect();
        let img = Image::from_vec(8, 8, 1, ValueRange::Metric, data).unwrap();
        assert_eq!(rmse(&img, &img, &cm_proto()).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_in_centimeters() {
        let gt = Image::from_vec(8, 8, 1, ValueRange::Metric, vec![100.0f64; 64]).unwrap();
        let pred = Image::from_vec(8, 8, 1, ValueRange::Metric, vec![105.0f64; 64]).unwrap();
        assert!((rmse(&pred, &gt, &cm_proto()).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn random_pair_matches_double_loop_oracle() {
        let mut rng = SeedRng::new(82, streams::TEST);
        let gt_data: Vec<f64> = (0..8 * 8).map(|_| rng.uniform()).collect();
        let pr_data: Vec<f64> = (0..8 * 8).map(|_| rng.uniform()).collect();
        let gt = Image::from_vec(8, 8, 1, ValueRange::Unit, gt_data.clone()).unwrap();
        let pred = Image::from_vec(8, 8, 1, ValueRange::Unit, pr_data.clone()).unwrap();

        // Independent direct computation, byte-range convention.
        let (lo, hi) = gt.min_max();
        let map = |v: f64| (v - lo) * 255.0 / (hi - lo);
        let mut acc = 0.0;
        for i in 0..64 {
            let d = map(pr_data[i]) - map(gt_data[i]);
            acc += d * d;
        }
        let want = (acc / 64.0).sqrt();
        let got = rmse(&pred, &gt, &EvalProtocol::default()).unwrap();
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn border_crop_excludes_frame() {
        let mut gt = Image::from_vec(6, 6, 1, ValueRange::Metric, vec![0.0f64; 36]).unwrap();
        let mut pred = gt.clone();
        // Mess up only the border; cropped RMSE must stay zero.
        for i in 0..6 {
            pred.set(0, i, 0, 50.0);
            pred.set(5, i, 0, 50.0);
        }
        gt.set(3, 3, 0, 1.0);
        pred.set(3, 3, 0, 1.0);
        let proto = EvalProtocol { convention: RmseConvention::Centimeters { unit_scale: 1.0 }, border_crop: 1 };
        assert_eq!(rmse(&pred, &gt, &proto).unwrap(), 0.0);
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let mut rng = SeedRng::new(83, streams::TEST);
        let proto = cm_proto();
        for _ in 0..20 {
            let mk = |rng: &mut SeedRng| {
                let data: Vec<f64> = (0..16).map(|_| rng.uniform()).collect();
                Image::from_vec(4, 4, 1, ValueRange::Metric, data).unwrap()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let c = mk(&mut rng);
            let dab = rmse(&a, &b, &proto).unwrap();
            let dba = rmse(&b, &a, &proto).unwrap();
            let dac = rmse(&a, &c, &proto).unwrap();
            let dcb = rmse(&c, &b, &proto).unwrap();
            assert!((dab - dba).abs() < 1e-12, "symmetry");
            assert!(dab <= dac + dcb + 1e-12, "triangle inequality");
            assert!(dab > 0.0, "positivity for distinct images");
        }
    }
}
