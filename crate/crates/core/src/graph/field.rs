//! Per-pixel kernel-field filtering and attentional kernel combination.
//!
//! A kernel field stores one k x k filter per pixel as a k^2-channel map.
//! Channel (dy+s)*k + (dx+s) holds the weight paired with the source sample
//! at offset (-dy, -dx), s = floor(k/2); samples outside the image read as
//! zero. The same per-pixel kernel is shared across every feature channel.

use super::{alloc_grad, Graph, Op, Var};
use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims, TensorData};

pub(crate) fn check_field_dims(fd: Dims, wd: Dims, k: usize) -> Result<()> {
    if k.is_multiple_of(2) || k == 0 {
        return Err(CoreError::InvalidParameter(format!("kernel size {k} must be odd")));
    }
    if wd.c != k * k {
        return Err(CoreError::ShapeMismatch(format!(
            "kernel field has {} channels, expected k^2 = {}",
            wd.c,
            k * k
        )));
    }
    if (fd.n, fd.h, fd.w) != (wd.n, wd.h, wd.w) {
        return Err(CoreError::ShapeMismatch(format!(
            "features {fd} and kernel field {wd} disagree on batch/spatial dims"
        )));
    }
    Ok(())
}

impl<S: Scalar> Graph<S> {
    /// Filter `f` with the per-pixel kernels in `w` (k^2 channels).
    pub fn apply_kernel_field(&mut self, f: Var, w: Var, k: usize) -> Result<Var> {
        let fd = self.dims(f);
        let wd = self.dims(w);
        check_field_dims(fd, wd, k)?;
        let s = (k / 2) as isize;
        let od = fd;
        let mut out = vec![S::zero(); od.numel()];
        {
            let fv = &self.nodes[f.0].value;
            let wv = &self.nodes[w.0].value;
            for n in 0..fd.n {
                for c in 0..fd.c {
                    for u in 0..fd.h {
                        for v in 0..fd.w {
                            let mut acc = S::zero();
                            for dy in -s..=s {
                                let sy = u as isize - dy;
                                if sy < 0 || sy >= fd.h as isize {
                                    continue;
                                }
                                for dx in -s..=s {
                                    let sx = v as isize - dx;
                                    if sx < 0 || sx >= fd.w as isize {
                                        continue;
                                    }
                                    let ch = ((dy + s) * k as isize + (dx + s)) as usize;
                                    acc += wv.data[wd.at(n, ch, u, v)]
                                            * fv.data[fd.at(n, c, sy as usize, sx as usize)];
                                }
                            }
                            out[od.at(n, c, u, v)] = acc;
                        }
                    }
                }
            }
        }
        let rg = self.any_grad(&[f, w]);
        Ok(self.push(
            TensorData { dims: od, data: out },
            rg,
            Op::KernelApply { f: f.0, w: w.0, k },
        ))
    }

    pub(super) fn kernel_apply_backward(
        &self,
        out_id: usize,
        f: usize,
        w: usize,
        k: usize,
        gy: &[S],
        grads: &mut [Option<Vec<S>>],
    ) {
        let od = self.nodes[out_id].value.dims;
        let fd = self.nodes[f].value.dims;
        let wd = self.nodes[w].value.dims;
        let s = (k / 2) as isize;
        let wants_f = self.nodes[f].requires_grad;
        let wants_w = self.nodes[w].requires_grad;

        if wants_f {
            let wv = &self.nodes[w].value;
            let gf = alloc_grad(grads, f, fd.numel());
            for n in 0..fd.n {
                for c in 0..fd.c {
                    for u in 0..fd.h {
                        for v in 0..fd.w {
                            let gyv = gy[od.at(n, c, u, v)];
                            for dy in -s..=s {
                                let sy = u as isize - dy;
                                if sy < 0 || sy >= fd.h as isize {
                                    continue;
                                }
                                for dx in -s..=s {
                                    let sx = v as isize - dx;
                                    if sx < 0 || sx >= fd.w as isize {
                                        continue;
                                    }
                                    let ch = ((dy + s) * k as isize + (dx + s)) as usize;
                                    let gi = fd.at(n, c, sy as usize, sx as usize);
                                    gf[gi] += wv.data[wd.at(n, ch, u, v)] * gyv;
                                }
                            }
                        }
                    }
                }
            }
        }

        if wants_w {
            let fv = &self.nodes[f].value;
            let gw = alloc_grad(grads, w, wd.numel());
            for n in 0..fd.n {
                for u in 0..fd.h {
                    for v in 0..fd.w {
                        for dy in -s..=s {
                            let sy = u as isize - dy;
                            if sy < 0 || sy >= fd.h as isize {
                                continue;
                            }
                            for dx in -s..=s {
                                let sx = v as isize - dx;
                                if sx < 0 || sx >= fd.w as isize {
                                    continue;
                                }
                                let ch = ((dy + s) * k as isize + (dx + s)) as usize;
                                let mut acc = S::zero();
                                for c in 0..fd.c {
                                    acc += fv.data[fd.at(n, c, sy as usize, sx as usize)]
                                            * gy[od.at(n, c, u, v)];
                                }
                                let gi = wd.at(n, ch, u, v);
                                gw[gi] += acc;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Per-pixel convex combination `w = a (.) wg + (1 - a) (.) wt`, with the
    /// single-channel attention map broadcast across all k^2 kernel weights.
    pub fn combine_kernels(&mut self, wg: Var, wt: Var, a: Var) -> Result<Var> {
        let gd = self.dims(wg);
        let td = self.dims(wt);
        let ad = self.dims(a);
        if gd != td {
            return Err(CoreError::ShapeMismatch(format!(
                "combine_kernels: dual fields disagree, {gd} vs {td}"
            )));
        }
        if ad != Dims::new(gd.n, 1, gd.h, gd.w) {
            return Err(CoreError::ShapeMismatch(format!(
                "combine_kernels: attention map {ad} must be {}x1x{}x{}",
                gd.n, gd.h, gd.w
            )));
        }
        let plane = gd.h * gd.w;
        let mut out = vec![S::zero(); gd.numel()];
        {
            let gv = &self.nodes[wg.0].value;
            let tv = &self.nodes[wt.0].value;
            let av = &self.nodes[a.0].value;
            for n in 0..gd.n {
                for c in 0..gd.c {
                    let base = gd.at(n, c, 0, 0);
                    let abase = ad.at(n, 0, 0, 0);
                    for i in 0..plane {
                        let alpha = av.data[abase + i];
                        out[base + i] = alpha * gv.data[base + i]
                            + (S::one() - alpha) * tv.data[base + i];
                    }
                }
            }
        }
        let rg = self.any_grad(&[wg, wt, a]);
        Ok(self.push(
            TensorData { dims: gd, data: out },
            rg,
            Op::CombineKernels { wg: wg.0, wt: wt.0, a: a.0 },
        ))
    }

    pub(super) fn combine_kernels_backward(
        &self,
        wg: usize,
        wt: usize,
        a: usize,
        gy: &[S],
        grads: &mut [Option<Vec<S>>],
    ) {
        let gd = self.nodes[wg].value.dims;
        let ad = self.nodes[a].value.dims;
        let plane = gd.h * gd.w;
        let av = &self.nodes[a].value;

        if self.nodes[wg].requires_grad {
            let g = alloc_grad(grads, wg, gd.numel());
            for n in 0..gd.n {
                for c in 0..gd.c {
                    let base = gd.at(n, c, 0, 0);
                    let abase = ad.at(n, 0, 0, 0);
                    for i in 0..plane {
                        g[base + i] += av.data[abase + i] * gy[base + i];
                    }
                }
            }
        }
        if self.nodes[wt].requires_grad {
            let g = alloc_grad(grads, wt, gd.numel());
            for n in 0..gd.n {
                for c in 0..gd.c {
                    let base = gd.at(n, c, 0, 0);
                    let abase = ad.at(n, 0, 0, 0);
                    for i in 0..plane {
                        g[base + i] += (S::one() - av.data[abase + i]) * gy[base + i];
                    }
                }
            }
        }
        if self.nodes[a].requires_grad {
            let gv = &self.nodes[wg].value;
            let tv = &self.nodes[wt].value;
            let g = alloc_grad(grads, a, ad.numel());
            for n in 0..gd.n {
                let abase = ad.at(n, 0, 0, 0);
                for c in 0..gd.c {
                    let base = gd.at(n, c, 0, 0);
                    for i in 0..plane {
                        g[abase + i] += (gv.data[base + i] - tv.data[base + i]) * gy[base + i];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{streams, SeedRng};

    fn delta_field(n: usize, k: usize, h: usize, w: usize) -> TensorData<f64> {
        let mut f = TensorData::zeros(Dims::new(n, k * k, h, w));
        let center = (k / 2) * k + k / 2;
        for b in 0..n {
            for y in 0..h {
                for x in 0..w {
                    f.set(b, center, y, x, 1.0);
                }
            }
        }
        f
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = SeedRng::new(4, streams::TEST);
        let fv = TensorData::<f64>::random_uniform(Dims::new(1, 3, 5, 4), -1.0, 1.0, &mut rng);
        let mut g = Graph::<f64>::new();
        let f = g.constant(fv.clone());
        let w = g.constant(delta_field(1, 3, 5, 4));
        let y = g.apply_kernel_field(f, w, 3).unwrap();
        assert_eq!(g.value(y).data, fv.data);
    }

    #[test]
    fn uniform_field_is_zero_padded_box_mean() {
        let mut rng = SeedRng::new(6, streams::TEST);
        let fv = TensorData::<f64>::random_uniform(Dims::new(1, 1, 4, 4), -1.0, 1.0, &mut rng);
        let mut g = Graph::<f64>::new();
        let f = g.constant(fv.clone());
        let w = g.constant(TensorData::full(Dims::new(1, 9, 4, 4), 1.0 / 9.0));
        let y = g.apply_kernel_field(f, w, 3).unwrap();
        for u in 0..4usize {
            for v in 0..4usize {
                let mut acc = 0.0;
                for dy in -1i32..=1 {
                    for dx in -1i32..=1 {
                        let (sy, sx) = (u as i32 - dy, v as i32 - dx);
                        if sy >= 0 && sy < 4 && sx >= 0 && sx < 4 {
                            acc += fv.get(0, 0, sy as usize, sx as usize);
                        }
                    }
                }
                let got = g.value(y).get(0, 0, u, v);
                assert!((got - acc / 9.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_pixel_output_is_center_weight_times_pixel() {
        let mut g = Graph::<f64>::new();
        let f = g.constant(TensorData::full(Dims::new(1, 1, 1, 1), 3.0));
        let mut wv = TensorData::zeros(Dims::new(1, 9, 1, 1));
        wv.set(0, 4, 0, 0, 0.5); // center channel of a 3x3 kernel
        wv.set(0, 0, 0, 0, 7.0); // off-center taps fall outside, must not count
        let w = g.constant(wv);
        let y = g.apply_kernel_field(f, w, 3).unwrap();
        assert_eq!(g.value(y).data, vec![1.5]);
    }

    #[test]
    fn combine_endpoints_and_midpoint() {
        let mut rng = SeedRng::new(8, streams::TEST);
        let d = Dims::new(1, 9, 3, 3);
        let wgv = TensorData::<f64>::random_uniform(d, -1.0, 1.0, &mut rng);
        let wtv = TensorData::<f64>::random_uniform(d, -1.0, 1.0, &mut rng);
        let ad = Dims::new(1, 1, 3, 3);

        // a -> 1 recovers the guidance kernels, a -> 0 the target kernels.
        let mut g = Graph::<f64>::new();
        let wg = g.constant(wgv.clone());
        let wt = g.constant(wtv.clone());
        let ones = g.constant(TensorData::full(ad, 1.0));
        let zeros = g.constant(TensorData::zeros(ad));
        let half = g.constant(TensorData::full(ad, 0.5));
        let w1 = g.combine_kernels(wg, wt, ones).unwrap();
        let w0 = g.combine_kernels(wg, wt, zeros).unwrap();
        let wh = g.combine_kernels(wg, wt, half).unwrap();
        assert_eq!(g.value(w1).data, wgv.data);
        assert_eq!(g.value(w0).data, wtv.data);
        for i in 0..d.numel() {
            let mid = 0.5 * wgv.data[i] + 0.5 * wtv.data[i];
            assert!((g.value(wh).data[i] - mid).abs() < 1e-12);
        }
    }

    #[test]
    fn combine_deviation_is_bounded_by_linearity() {
        // |combine(a) - wg| <= (1-a) * max|wg - wt|, exact by linearity.
        let mut rng = SeedRng::new(12, streams::TEST);
        let d = Dims::new(1, 9, 4, 4);
        let wgv = TensorData::<f64>::random_uniform(d, -1.0, 1.0, &mut rng);
        let wtv = TensorData::<f64>::random_uniform(d, -1.0, 1.0, &mut rng);
        for a_const in [0.9, 0.99, 0.999] {
            let mut g = Graph::<f64>::new();
            let wg = g.constant(wgv.clone());
            let wt = g.constant(wtv.clone());
            let a = g.constant(TensorData::full(Dims::new(1, 1, 4, 4), a_const));
            let w = g.combine_kernels(wg, wt, a).unwrap();
            let max_gap = wgv.max_abs_diff(&wtv);
            let dev = g.value(w).max_abs_diff(&wgv);
            assert!(dev <= (1.0 - a_const) * max_gap + 1e-12);
        }
    }

    #[test]
    fn dimension_mismatches_error() {
        let mut g = Graph::<f64>::new();
        let f = g.constant(TensorData::zeros(Dims::new(1, 2, 4, 4)));
        let w = g.constant(TensorData::zeros(Dims::new(1, 8, 4, 4)));
        assert!(g.apply_kernel_field(f, w, 3).is_err()); // 8 != 9
        let w = g.constant(TensorData::zeros(Dims::new(1, 9, 3, 4)));
        assert!(g.apply_kernel_field(f, w, 3).is_err()); // spatial mismatch
        let wg = g.constant(TensorData::zeros(Dims::new(1, 9, 4, 4)));
        let wt = g.constant(TensorData::zeros(Dims::new(1, 9, 4, 4)));
        let a = g.constant(TensorData::zeros(Dims::new(1, 1, 4, 3)));
        assert!(g.combine_kernels(wg, wt, a).is_err());
    }
}
