//! Differentiable spatial resampling. Forward goes through the shared
//! [`crate::resample`] plans so tensor and image paths agree bit-exactly;
//! backward scatters through the same plans (the exact adjoint of the
//! linear resampling map, valid for all three modes).

use super::{alloc_grad, Graph, Op, Var};
use crate::error::{CoreError, Result};
use crate::resample::{apply_cols, apply_rows, build_plan, ResamplePlan, ResizeMode};
use crate::scalar::Scalar;
use crate::tensor::{Dims, TensorData};

impl<S: Scalar> Graph<S> {
    pub fn resize(&mut self, x: Var, out_h: usize, out_w: usize, mode: ResizeMode) -> Result<Var> {
        if out_h < 1 || out_w < 1 {
            return Err(CoreError::InvalidParameter(format!(
                "resize target {out_h}x{out_w} must be at least 1x1"
            )));
        }
        let d = self.dims(x);
        let plan_h = build_plan::<S>(mode, d.h, out_h);
        let plan_w = build_plan::<S>(mode, d.w, out_w);
        let od = Dims::new(d.n, d.c, out_h, out_w);
        let mut out = vec![S::zero(); od.numel()];
        {
            let xv = &self.nodes[x.0].value;
            for n in 0..d.n {
                for c in 0..d.c {
                    let start = d.at(n, c, 0, 0);
                    let plane = &xv.data[start..start + d.h * d.w];
                    let rows = apply_rows(plane, d.w, &plan_h);
                    let full = apply_cols(&rows, out_h, d.w, &plan_w);
                    let ostart = od.at(n, c, 0, 0);
                    out[ostart..ostart + out_h * out_w].copy_from_slice(&full);
                }
            }
        }
        let rg = self.requires_grad(x);
        Ok(self.push(
            TensorData { dims: od, data: out },
            rg,
            Op::Resize { x: x.0, plan_h, plan_w },
        ))
    }

    pub fn upsample_2x_bilinear(&mut self, x: Var) -> Result<Var> {
        let d = self.dims(x);
        self.resize(x, d.h * 2, d.w * 2, ResizeMode::Bilinear)
    }

    pub(super) fn resize_backward(
        &self,
        out_id: usize,
        x: usize,
        plan_h: &ResamplePlan<S>,
        plan_w: &ResamplePlan<S>,
        gy: &[S],
        grads: &mut [Option<Vec<S>>],
    ) {
        if !self.nodes[x].requires_grad {
            return;
        }
        let od = self.nodes[out_id].value.dims;
        let xd = self.nodes[x].value.dims;
        let gx = alloc_grad(grads, x, xd.numel());
        // Adjoint of cols-after-rows: scatter columns back, then rows.
        let mut mid = vec![S::zero(); od.h * xd.w];
        for n in 0..od.n {
            for c in 0..od.c {
                mid.iter_mut().for_each(|v| *v = S::zero());
                let gstart = od.at(n, c, 0, 0);
                let gp = &gy[gstart..gstart + od.h * od.w];
                for y in 0..od.h {
                    for ox in 0..od.w {
                        let gv = gp[y * od.w + ox];
                        for t in 0..plan_w.taps {
                            let sx = plan_w.idx[ox * plan_w.taps + t] as usize;
                            let wt = plan_w.wts[ox * plan_w.taps + t];
                            mid[y * xd.w + sx] += wt * gv;
                        }
                    }
                }
                let xstart = xd.at(n, c, 0, 0);
                for oy in 0..od.h {
                    for t in 0..plan_h.taps {
                        let sy = plan_h.idx[oy * plan_h.taps + t] as usize;
                        let wt = plan_h.wts[oy * plan_h.taps + t];
                        let dst = &mut gx[xstart + sy * xd.w..xstart + (sy + 1) * xd.w];
                        let src = &mid[oy * xd.w..(oy + 1) * xd.w];
                        for (g, m) in dst.iter_mut().zip(src) {
                            *g += wt * *m;
                        }
                    }
                }
            }
        }
    }
}
