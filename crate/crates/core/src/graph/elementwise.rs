//! Forward implementations for elementwise and reduction ops.

use super::{Graph, Op, Var};
use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims, TensorData};

impl<S: Scalar> Graph<S> {
    fn same_dims(&self, a: Var, b: Var, what: &str) -> Result<Dims> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(CoreError::ShapeMismatch(format!("{what}: {da} vs {db}")));
        }
        Ok(da)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let dims = self.same_dims(a, b, "add")?;
        let data = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(x, y)| *x + *y)
            .collect();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(TensorData { dims, data }, rg, Op::Add { a: a.0, b: b.0 }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let dims = self.same_dims(a, b, "sub")?;
        let data = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(x, y)| *x - *y)
            .collect();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(TensorData { dims, data }, rg, Op::Sub { a: a.0, b: b.0 }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let dims = self.same_dims(a, b, "mul")?;
        let data = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(x, y)| *x * *y)
            .collect();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(TensorData { dims, data }, rg, Op::Mul { a: a.0, b: b.0 }))
    }

    pub fn mul_const(&mut self, x: Var, c: S) -> Var {
        let dims = self.dims(x);
        let data = self.nodes[x.0].value.data.iter().map(|v| *v * c).collect();
        let rg = self.requires_grad(x);
        self.push(TensorData { dims, data }, rg, Op::MulConst { x: x.0, c })
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let dims = self.dims(x);
        let data = self.nodes[x.0].value.data.iter().map(|v| v.abs()).collect();
        let rg = self.requires_grad(x);
        self.push(TensorData { dims, data }, rg, Op::Abs { x: x.0 })
    }

    /// Logistic sigmoid, with the output nudged into the open interval so a
    /// saturated activation still satisfies 0 < y < 1 in finite precision.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let dims = self.dims(x);
        let one = S::one();
        let lo = S::min_positive_value();
        let hi = one - S::epsilon();
        let data = self.nodes[x.0]
            .value
            .data
            .iter()
            .map(|v| {
                let y = one / (one + (-*v).exp());
                y.max(lo).min(hi)
            })
            .collect();
        let rg = self.requires_grad(x);
        self.push(TensorData { dims, data }, rg, Op::Sigmoid { x: x.0 })
    }

    /// Mean over every element, yielding a 1x1x1x1 scalar node.
    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.nodes[x.0].value.numel();
        let mut acc = S::zero();
        for v in &self.nodes[x.0].value.data {
            acc += *v;
        }
        let m = acc / S::from_f64(n as f64);
        let rg = self.requires_grad(x);
        self.push(TensorData::scalar(m), rg, Op::Mean { x: x.0 })
    }

    /// Concatenate along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(CoreError::InvalidParameter("concat of zero tensors".into()));
        }
        let d0 = self.dims(parts[0]);
        let mut c_total = 0usize;
        for &p in parts {
            let d = self.dims(p);
            if (d.n, d.h, d.w) != (d0.n, d0.h, d0.w) {
                return Err(CoreError::ShapeMismatch(format!(
                    "concat: {d} not stackable with {d0}"
                )));
            }
            c_total += d.c;
        }
        let dims = Dims::new(d0.n, c_total, d0.h, d0.w);
        let plane = d0.h * d0.w;
        let mut data = vec![S::zero(); dims.numel()];
        for n in 0..d0.n {
            let mut c_off = 0usize;
            for &p in parts {
                let pv = &self.nodes[p.0].value;
                let pc = pv.dims.c;
                let src = &pv.data[n * pc * plane..(n + 1) * pc * plane];
                let dst_start = (n * c_total + c_off) * plane;
                data[dst_start..dst_start + pc * plane].copy_from_slice(src);
                c_off += pc;
            }
        }
        let rg = self.any_grad(parts);
        Ok(self.push(
            TensorData { dims, data },
            rg,
            Op::Concat { parts: parts.iter().map(|v| v.0).collect() },
        ))
    }

    /// Rescale each pixel's channel vector so it sums to one, guarded by a
    /// signed epsilon in the denominator against near-zero sums.
    pub fn normalize_channel_sum(&mut self, x: Var, eps: S) -> Var {
        let dims = self.dims(x);
        let plane = dims.h * dims.w;
        let mut out = vec![S::zero(); dims.numel()];
        {
            let xv = &self.nodes[x.0].value;
            for n in 0..dims.n {
                for i in 0..plane {
                    let mut sum = S::zero();
                    for c in 0..dims.c {
                        sum += xv.data[(n * dims.c + c) * plane + i];
                    }
                    let denom = sum + eps.copysign(sum);
                    for c in 0..dims.c {
                        let off = (n * dims.c + c) * plane + i;
                        out[off] = xv.data[off] / denom;
                    }
                }
            }
        }
        let rg = self.requires_grad(x);
        self.push(TensorData { dims, data: out }, rg, Op::NormalizeChannelSum { x: x.0, eps })
    }

    /// Broadcast-multiply by a scalar (1x1x1x1) node: `y = scale * x`.
    pub fn scale_broadcast(&mut self, x: Var, scale: Var) -> Result<Var> {
        if !self.dims(scale).is_scalar() {
            return Err(CoreError::ShapeMismatch(format!(
                "scale_broadcast expects a scalar multiplier, got {}",
                self.dims(scale)
            )));
        }
        let sv = self.nodes[scale.0].value.data[0];
        let dims = self.dims(x);
        let data = self.nodes[x.0].value.data.iter().map(|v| *v * sv).collect();
        let rg = self.any_grad(&[x, scale]);
        Ok(self.push(
            TensorData { dims, data },
            rg,
            Op::ScaleBroadcast { x: x.0, scale: scale.0 },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_stacks_channels_in_order() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(TensorData::from_vec(Dims::new(1, 1, 1, 2), vec![1.0, 2.0]).unwrap());
        let b = g.constant(TensorData::from_vec(Dims::new(1, 2, 1, 2), vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let c = g.concat(&[a, b]).unwrap();
        assert_eq!(g.dims(c), Dims::new(1, 3, 1, 2));
        assert_eq!(g.value(c).data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn concat_batch_respects_sample_boundaries() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(TensorData::from_vec(Dims::new(2, 1, 1, 1), vec![1.0, 2.0]).unwrap());
        let b = g.constant(TensorData::from_vec(Dims::new(2, 1, 1, 1), vec![10.0, 20.0]).unwrap());
        let c = g.concat(&[a, b]).unwrap();
        assert_eq!(g.value(c).data, vec![1.0, 10.0, 2.0, 20.0]);
    }

    #[test]
    fn mismatched_shapes_error() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(TensorData::zeros(Dims::new(1, 1, 2, 2)));
        let b = g.constant(TensorData::zeros(Dims::new(1, 1, 2, 3)));
        assert!(g.add(a, b).is_err());
        assert!(g.mul(a, b).is_err());
    }
}
