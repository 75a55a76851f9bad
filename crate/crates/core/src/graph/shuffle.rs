//! Sub-pixel rearrangement: pixel shuffle and its exact inverse.
//!
//! Index convention matches the usual sub-pixel layout: output channel c at
//! spatial (y, x) reads input channel `c*r^2 + (y%r)*r + (x%r)` at
//! (y/r, x/r). Both directions are pure permutations, so the backward pass
//! is the opposite permutation and the pair is bit-exact.

use super::{alloc_grad, Graph, Op, Var};
use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims, TensorData};

fn shuffle_map<S: Scalar>(src: &TensorData<S>, r: usize) -> (Dims, Vec<S>) {
    let d = src.dims;
    let oc = d.c / (r * r);
    let od = Dims::new(d.n, oc, d.h * r, d.w * r);
    let mut out = vec![S::zero(); od.numel()];
    for n in 0..od.n {
        for c in 0..oc {
            for y in 0..od.h {
                for x in 0..od.w {
                    let ic = c * r * r + (y % r) * r + (x % r);
                    out[od.at(n, c, y, x)] = src.data[d.at(n, ic, y / r, x / r)];
                }
            }
        }
    }
    (od, out)
}

fn unshuffle_map<S: Scalar>(src: &TensorData<S>, r: usize) -> (Dims, Vec<S>) {
    let d = src.dims;
    let od = Dims::new(d.n, d.c * r * r, d.h / r, d.w / r);
    let mut out = vec![S::zero(); od.numel()];
    for n in 0..d.n {
        for c in 0..d.c {
            for y in 0..d.h {
                for x in 0..d.w {
                    let oc = c * r * r + (y % r) * r + (x % r);
                    out[od.at(n, oc, y / r, x / r)] = src.data[d.at(n, c, y, x)];
                }
            }
        }
    }
    (od, out)
}

impl<S: Scalar> Graph<S> {
    /// (N, C*r^2, H, W) -> (N, C, H*r, W*r).
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let d = self.dims(x);
        if r < 1 || !d.c.is_multiple_of(r * r) {
            return Err(CoreError::ShapeMismatch(format!(
                "pixel_shuffle: {} channels not divisible by r^2 = {}",
                d.c,
                r * r
            )));
        }
        let (dims, data) = shuffle_map(&self.nodes[x.0].value, r);
        let rg = self.requires_grad(x);
        Ok(self.push(TensorData { dims, data }, rg, Op::PixelShuffle { x: x.0, r }))
    }

    /// (N, C, H, W) -> (N, C*r^2, H/r, W/r); exact inverse of pixel_shuffle.
    pub fn inv_pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let d = self.dims(x);
        if r < 1 || !d.h.is_multiple_of(r) || !d.w.is_multiple_of(r) {
            return Err(CoreError::ShapeMismatch(format!(
                "inv_pixel_shuffle: spatial dims {}x{} not divisible by r = {r}",
                d.h, d.w
            )));
        }
        let (dims, data) = unshuffle_map(&self.nodes[x.0].value, r);
        let rg = self.requires_grad(x);
        Ok(self.push(TensorData { dims, data }, rg, Op::InvPixelShuffle { x: x.0, r }))
    }

    pub(super) fn pixel_shuffle_backward(
        &self,
        out_id: usize,
        x: usize,
        r: usize,
        gy: &[S],
        grads: &mut [Option<Vec<S>>],
    ) {
        if !self.nodes[x].requires_grad {
            return;
        }
        let od = self.nodes[out_id].value.dims;
        let xd = self.nodes[x].value.dims;
        let gx = alloc_grad(grads, x, xd.numel());
        for n in 0..od.n {
            for c in 0..od.c {
                for y in 0..od.h {
                    for x_ in 0..od.w {
                        let ic = c * r * r + (y % r) * r + (x_ % r);
                        let gi = xd.at(n, ic, y / r, x_ / r);
                        gx[gi] += gy[od.at(n, c, y, x_)];
                    }
                }
            }
        }
    }

    pub(super) fn inv_pixel_shuffle_backward(
        &self,
        out_id: usize,
        x: usize,
        r: usize,
        gy: &[S],
        grads: &mut [Option<Vec<S>>],
    ) {
        if !self.nodes[x].requires_grad {
            return;
        }
        let od = self.nodes[out_id].value.dims;
        let xd = self.nodes[x].value.dims;
        let gx = alloc_grad(grads, x, xd.numel());
        for n in 0..xd.n {
            for c in 0..xd.c {
                for y in 0..xd.h {
                    for x_ in 0..xd.w {
                        let oc = c * r * r + (y % r) * r + (x_ % r);
                        let gi = xd.at(n, c, y, x_);
                        gx[gi] += gy[od.at(n, oc, y / r, x_ / r)];
                    }
                }
            }
        }
    }
}
