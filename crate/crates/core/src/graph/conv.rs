//! 2-D convolution (zero padding) and PReLU.

use super::{alloc_grad, Graph, Op, Var};
use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims, TensorData};

fn conv_out_len(input: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

impl<S: Scalar> Graph<S> {
    /// Cross-correlation with zero padding, bias shaped (1, C_out, 1, 1).
    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let xd = self.dims(x);
        let wd = self.dims(weight);
        let bd = self.dims(bias);
        if stride < 1 {
            return Err(CoreError::InvalidParameter("conv2d stride must be >= 1".into()));
        }
        // Weight layout: (C_out, C_in, kh, kw) mapped onto NCHW fields.
        let (c_out, c_in, kh, kw) = (wd.n, wd.c, wd.h, wd.w);
        if xd.c != c_in {
            return Err(CoreError::ShapeMismatch(format!(
                "conv2d: input has {} channels, weight expects {}",
                xd.c, c_in
            )));
        }
        if bd != Dims::new(1, c_out, 1, 1) {
            return Err(CoreError::ShapeMismatch(format!(
                "conv2d: bias must be 1x{c_out}x1x1, got {bd}"
            )));
        }
        let (oh, ow) = match (conv_out_len(xd.h, kh, stride, padding), conv_out_len(xd.w, kw, stride, padding)) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 => (oh, ow),
            _ => {
                return Err(CoreError::ShapeMismatch(format!(
                    "conv2d: kernel {kh}x{kw} does not fit input {}x{} with padding {padding}",
                    xd.h, xd.w
                )))
            }
        };
        self.nodes[x.0].value.ensure_finite("conv2d input")?;
        self.nodes[weight.0].value.ensure_finite("conv2d weight")?;
        self.nodes[bias.0].value.ensure_finite("conv2d bias")?;

        let out_dims = Dims::new(xd.n, c_out, oh, ow);
        let mut out = vec![S::zero(); out_dims.numel()];
        {
            let xv = &self.nodes[x.0].value;
            let wv = &self.nodes[weight.0].value;
            let bv = &self.nodes[bias.0].value;
            for n in 0..xd.n {
                for co in 0..c_out {
                    let b = bv.data[co];
                    for oy in 0..oh {
                        let orow_start = out_dims.at(n, co, oy, 0);
                        let orow = &mut out[orow_start..orow_start + ow];
                        for v in orow.iter_mut() {
                            *v = b;
                        }
                        for ci in 0..c_in {
                            for ky in 0..kh {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                if iy < 0 || iy >= xd.h as isize {
                                    continue;
                                }
                                let xrow_start = xd.at(n, ci, iy as usize, 0);
                                let xrow = &xv.data[xrow_start..xrow_start + xd.w];
                                let wrow_start = wd.at(co, ci, ky, 0);
                                let wrow = &wv.data[wrow_start..wrow_start + kw];
                                if stride == 1 {
                                    for (kx, &wk) in wrow.iter().enumerate() {
                                        let shift = kx as isize - padding as isize;
                                        let lo = (-shift).max(0) as usize;
                                        let hi = (ow as isize).min(xd.w as isize - shift).max(0) as usize;
                                        if lo >= hi {
                                            continue;
                                        }
                                        let src = &xrow[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                                        for (o, v) in orow[lo..hi].iter_mut().zip(src) {
                                            *o += wk * *v;
                                        }
                                    }
                                } else {
                                    for (kx, &wk) in wrow.iter().enumerate() {
                                        for (ox, o) in orow.iter_mut().enumerate() {
                                            let ix = (ox * stride + kx) as isize - padding as isize;
                                            if ix >= 0 && ix < xd.w as isize {
                                                *o += wk * xrow[ix as usize];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let rg = self.any_grad(&[x, weight, bias]);
        Ok(self.push(
            TensorData { dims: out_dims, data: out },
            rg,
            Op::Conv2d { x: x.0, w: weight.0, b: bias.0, stride, padding },
        ))
    }

    pub(super) fn conv2d_backward(
        &self,
        out_id: usize,
        x: usize,
        w: usize,
        b: usize,
        stride: usize,
        padding: usize,
        gy: &[S],
        grads: &mut [Option<Vec<S>>],
    ) {
        let od = self.nodes[out_id].value.dims;
        let xd = self.nodes[x].value.dims;
        let wd = self.nodes[w].value.dims;
        let (c_out, c_in, kh, kw) = (wd.n, wd.c, wd.h, wd.w);
        let (oh, ow) = (od.h, od.w);

        if self.nodes[b].requires_grad {
            let gb = alloc_grad(grads, b, c_out);
            for n in 0..od.n {
                for co in 0..c_out {
                    let start = od.at(n, co, 0, 0);
                    let mut acc = S::zero();
                    for v in &gy[start..start + oh * ow] {
                        acc += *v;
                    }
                    gb[co] += acc;
                }
            }
        }

        if self.nodes[w].requires_grad {
            let xv = &self.nodes[x].value;
            let gw = alloc_grad(grads, w, wd.numel());
            for n in 0..od.n {
                for co in 0..c_out {
                    for oy in 0..oh {
                        let gyrow = &gy[od.at(n, co, oy, 0)..od.at(n, co, oy, 0) + ow];
                        for ci in 0..c_in {
                            for ky in 0..kh {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                if iy < 0 || iy >= xd.h as isize {
                                    continue;
                                }
                                let xrow_start = xd.at(n, ci, iy as usize, 0);
                                let xrow = &xv.data[xrow_start..xrow_start + xd.w];
                                for kx in 0..kw {
                                    let mut acc = S::zero();
                                    if stride == 1 {
                                        let shift = kx as isize - padding as isize;
                                        let lo = (-shift).max(0) as usize;
                                        let hi = (ow as isize).min(xd.w as isize - shift).max(0) as usize;
                                        if lo < hi {
                                            let src = &xrow[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                                            for (gyv, xvv) in gyrow[lo..hi].iter().zip(src) {
                                                acc += *gyv * *xvv;
                                            }
                                        }
                                    } else {
                                        for ox in 0..ow {
                                            let ix = (ox * stride + kx) as isize - padding as isize;
                                            if ix >= 0 && ix < xd.w as isize {
                                                acc += gyrow[ox] * xrow[ix as usize];
                                            }
                                        }
                                    }
                                    let wi = wd.at(co, ci, ky, kx);
                                    gw[wi] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }

        if self.nodes[x].requires_grad {
            let wv = &self.nodes[w].value;
            let gx = alloc_grad(grads, x, xd.numel());
            for n in 0..od.n {
                for co in 0..c_out {
                    for oy in 0..oh {
                        let gyrow = &gy[od.at(n, co, oy, 0)..od.at(n, co, oy, 0) + ow];
                        for ci in 0..c_in {
                            for ky in 0..kh {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                if iy < 0 || iy >= xd.h as isize {
                                    continue;
                                }
                                let gxrow_start = xd.at(n, ci, iy as usize, 0);
                                for kx in 0..kw {
                                    let wk = wv.data[wd.at(co, ci, ky, kx)];
                                    if stride == 1 {
                                        let shift = kx as isize - padding as isize;
                                        let lo = (-shift).max(0) as usize;
                                        let hi = (ow as isize).min(xd.w as isize - shift).max(0) as usize;
                                        if lo < hi {
                                            let dst = &mut gx[gxrow_start + (lo as isize + shift) as usize
                                                ..gxrow_start + (hi as isize + shift) as usize];
                                            for (g, gyv) in dst.iter_mut().zip(&gyrow[lo..hi]) {
                                                *g += wk * *gyv;
                                            }
                                        }
                                    } else {
                                        for ox in 0..ow {
                                            let ix = (ox * stride + kx) as isize - padding as isize;
                                            if ix >= 0 && ix < xd.w as isize {
                                                let gi = gxrow_start + ix as usize;
                                                gx[gi] += wk * gyrow[ox];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// PReLU with one learnable slope per channel, slope shaped (1, C, 1, 1).
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        let xd = self.dims(x);
        let sd = self.dims(slope);
        if sd != Dims::new(1, xd.c, 1, 1) {
            return Err(CoreError::ShapeMismatch(format!(
                "prelu: slope must be 1x{}x1x1, got {sd}",
                xd.c
            )));
        }
        let plane = xd.h * xd.w;
        let mut out = vec![S::zero(); xd.numel()];
        {
            let xv = &self.nodes[x.0].value;
            let sv = &self.nodes[slope.0].value;
            for n in 0..xd.n {
                for c in 0..xd.c {
                    let a = sv.data[c];
                    let start = xd.at(n, c, 0, 0);
                    for i in start..start + plane {
                        let v = xv.data[i];
                        out[i] = if v >= S::zero() { v } else { a * v };
                    }
                }
            }
        }
        let rg = self.any_grad(&[x, slope]);
        Ok(self.push(
            TensorData { dims: xd, data: out },
            rg,
            Op::PRelu { x: x.0, slope: slope.0 },
        ))
    }

    pub(super) fn prelu_backward(&self, x: usize, slope: usize, gy: &[S], grads: &mut [Option<Vec<S>>]) {
        let xd = self.nodes[x].value.dims;
        let plane = xd.h * xd.w;
        if self.nodes[x].requires_grad {
            let xv = &self.nodes[x].value;
            let sv = &self.nodes[slope].value;
            let gx = alloc_grad(grads, x, xd.numel());
            for n in 0..xd.n {
                for c in 0..xd.c {
                    let a = sv.data[c];
                    let start = xd.at(n, c, 0, 0);
                    for i in start..start + plane {
                        let f = if xv.data[i] >= S::zero() { S::one() } else { a };
                        gx[i] += f * gy[i];
                    }
                }
            }
        }
        if self.nodes[slope].requires_grad {
            let xv = &self.nodes[x].value;
            let gs = alloc_grad(grads, slope, xd.c);
            for n in 0..xd.n {
                for c in 0..xd.c {
                    let start = xd.at(n, c, 0, 0);
                    let mut acc = S::zero();
                    for i in start..start + plane {
                        if xv.data[i] < S::zero() {
                            acc += xv.data[i] * gy[i];
                        }
                    }
                    gs[c] += acc;
                }
            }
        }
    }
}
