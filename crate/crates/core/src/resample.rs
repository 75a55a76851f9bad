//! Separable image resampling shared by the tensor op and the image path,
//! so both produce bit-identical results for the same dtype.
//!
//! Coordinate mapping is the half-pixel convention
//! `src = (dst + 0.5) * in/out - 0.5` with edge-clamped sample indices.
//! Bicubic uses the Catmull-Rom kernel (a = -0.5).

use crate::scalar::{s, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeMode {
    Nearest,
    Bilinear,
    Bicubic,
}

impl ResizeMode {
    pub fn parse(name: &str) -> Option<ResizeMode> {
        match name {
            "nearest" => Some(ResizeMode::Nearest),
            "bilinear" => Some(ResizeMode::Bilinear),
            "bicubic" => Some(ResizeMode::Bicubic),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ResizeMode::Nearest => "nearest",
            ResizeMode::Bilinear => "bilinear",
            ResizeMode::Bicubic => "bicubic",
        }
    }

    fn taps(&self) -> usize {
        match self {
            ResizeMode::Nearest => 1,
            ResizeMode::Bilinear => 2,
            ResizeMode::Bicubic => 4,
        }
    }
}

/// One-dimensional gather plan: for output index `o`, the source indices are
/// `idx[o*taps..(o+1)*taps]` with matching weights. Weights along each output
/// index sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ResamplePlan<S: Scalar> {
    pub taps: usize,
    pub idx: Vec<u32>,
    pub wts: Vec<S>,
}

/// Catmull-Rom weight for normalized distance t in [0, 2).
fn catmull_rom(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t < 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * (t * t * t - 5.0 * t * t + 8.0 * t - 4.0)
    } else {
        0.0
    }
}

pub fn build_plan<S: Scalar>(mode: ResizeMode, in_len: usize, out_len: usize) -> ResamplePlan<S> {
    assert!(in_len >= 1 && out_len >= 1, "resample lengths must be positive");
    let taps = mode.taps();
    let mut idx = Vec::with_capacity(out_len * taps);
    let mut wts = Vec::with_capacity(out_len * taps);
    let scale = in_len as f64 / out_len as f64;
    let clamp = |i: i64| -> u32 { i.clamp(0, in_len as i64 - 1) as u32 };

    for o in 0..out_len {
        let src = (o as f64 + 0.5) * scale - 0.5;
        match mode {
            ResizeMode::Nearest => {
                idx.push(clamp((src + 0.5).floor() as i64));
                wts.push(S::one());
            }
            ResizeMode::Bilinear => {
                let base = src.floor();
                let frac = src - base;
                let b = base as i64;
                idx.push(clamp(b));
                idx.push(clamp(b + 1));
                wts.push(s::<S>(1.0 - frac));
                wts.push(s::<S>(frac));
            }
            ResizeMode::Bicubic => {
                let base = src.floor() as i64;
                let mut raw = [0.0f64; 4];
                let mut total = 0.0;
                for (j, r) in raw.iter_mut().enumerate() {
                    let i = base - 1 + j as i64;
                    *r = catmull_rom(src - i as f64);
                    total += *r;
                }
                // Catmull-Rom weights sum to 1 analytically; renormalize to
                // kill residual rounding so constant inputs stay constant.
                for (j, r) in raw.iter().enumerate() {
                    idx.push(clamp(base - 1 + j as i64));
                    wts.push(s::<S>(r / total));
                }
            }
        }
    }
    ResamplePlan { taps, idx, wts }
}

/// Resample the rows of an `in_h x in_w` plane to `out_len` rows.
/// `plane` is row-major; result is `out_len x in_w`.
pub fn apply_rows<S: Scalar>(plane: &[S], in_w: usize, plan: &ResamplePlan<S>) -> Vec<S> {
    let out_h = plan.idx.len() / plan.taps;
    let mut out = vec![S::zero(); out_h * in_w];
    for oy in 0..out_h {
        let row = &mut out[oy * in_w..(oy + 1) * in_w];
        for t in 0..plan.taps {
            let sy = plan.idx[oy * plan.taps + t] as usize;
            let wt = plan.wts[oy * plan.taps + t];
            let src = &plane[sy * in_w..(sy + 1) * in_w];
            for (o, v) in row.iter_mut().zip(src) {
                *o += wt * *v;
            }
        }
    }
    out
}

/// Resample the columns of an `in_h x in_w` plane to `out_len` columns.
pub fn apply_cols<S: Scalar>(plane: &[S], in_h: usize, in_w: usize, plan: &ResamplePlan<S>) -> Vec<S> {
    let out_w = plan.idx.len() / plan.taps;
    let mut out = vec![S::zero(); in_h * out_w];
    for y in 0..in_h {
        let src_row = &plane[y * in_w..(y + 1) * in_w];
        let dst_row = &mut out[y * out_w..(y + 1) * out_w];
        for (ox, o) in dst_row.iter_mut().enumerate() {
            let mut acc = S::zero();
            for t in 0..plan.taps {
                let sx = plan.idx[ox * plan.taps + t] as usize;
                acc += plan.wts[ox * plan.taps + t] * src_row[sx];
            }
            *o = acc;
        }
    }
    out
}

/// Full separable resize of one plane (rows first, then columns).
pub fn resize_plane<S: Scalar>(
    plane: &[S],
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    mode: ResizeMode,
) -> Vec<S> {
    let plan_h = build_plan::<S>(mode, in_h, out_h);
    let plan_w = build_plan::<S>(mode, in_w, out_w);
    let rows = apply_rows(plane, in_w, &plan_h);
    apply_cols(&rows, out_h, in_w, &plan_w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        for mode in [ResizeMode::Nearest, ResizeMode::Bilinear, ResizeMode::Bicubic] {
            for (i, o) in [(8usize, 16usize), (16, 8), (5, 7), (7, 5), (1, 4)] {
                let plan = build_plan::<f64>(mode, i, o);
                for oi in 0..o {
                    let sum: f64 = plan.wts[oi * plan.taps..(oi + 1) * plan.taps]
                        .iter()
                        .sum();
                    assert!((sum - 1.0).abs() < 1e-12, "{mode:?} {i}->{o} at {oi}: {sum}");
                }
            }
        }
    }

    #[test]
    fn constant_plane_stays_constant() {
        let plane = vec![0.37f64; 6 * 5];
        for mode in [ResizeMode::Nearest, ResizeMode::Bilinear, ResizeMode::Bicubic] {
            let out = resize_plane(&plane, 6, 5, 13, 9, mode);
            for v in out {
                assert!((v - 0.37).abs() < 1e-12, "{mode:?}");
            }
        }
    }

    #[test]
    fn nearest_two_x_matches_index_mapping() {
        // [[1,2],[3,4]] -> 4x4 block expansion
        let plane = vec![1.0f64, 2.0, 3.0, 4.0];
        let out = resize_plane(&plane, 2, 2, 4, 4, ResizeMode::Nearest);
        let expect = [
            1.0, 1.0, 2.0, 2.0, //
            1.0, 1.0, 2.0, 2.0, //
            3.0, 3.0, 4.0, 4.0, //
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(out, expect);
    }

    #[test]
    fn bicubic_matches_direct_kernel_sum() {
        // Direct (non-separable) evaluation of the same Catmull-Rom kernel.
        let mut rng = crate::rng::SeedRng::new(3, crate::rng::streams::TEST);
        let (ih, iw, oh, ow) = (8usize, 8usize, 16usize, 16usize);
        let plane: Vec<f64> = (0..ih * iw).map(|_| rng.uniform()).collect();
        let got = resize_plane(&plane, ih, iw, oh, ow, ResizeMode::Bicubic);

        for oy in 0..oh {
            for ox in 0..ow {
                let sy = (oy as f64 + 0.5) * (ih as f64 / oh as f64) - 0.5;
                let sx = (ox as f64 + 0.5) * (iw as f64 / ow as f64) - 0.5;
                let (by, bx) = (sy.floor() as i64, sx.floor() as i64);
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for jy in 0..4i64 {
                    for jx in 0..4i64 {
                        let (iy, ix) = (by - 1 + jy, bx - 1 + jx);
                        let w = catmull_rom(sy - iy as f64) * catmull_rom(sx - ix as f64);
                        let iy = iy.clamp(0, ih as i64 - 1) as usize;
                        let ix = ix.clamp(0, iw as i64 - 1) as usize;
                        acc += w * plane[iy * iw + ix];
                        wsum += w;
                    }
                }
                let direct = acc / wsum;
                let diff = (direct - got[oy * ow + ox]).abs();
                assert!(diff < 1e-5, "({oy},{ox}): {direct} vs {}", got[oy * ow + ox]);
            }
        }
    }
}
