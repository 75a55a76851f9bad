//! Reverse-mode autodiff over dense NCHW tensors.
//!
//! A [`Graph`] is a define-by-run tape: every forward op validates its
//! inputs, computes the value eagerly, and records what it needs for the
//! backward sweep. [`Graph::backward`] walks the tape once in reverse
//! creation order, which is a valid topological order by construction, and
//! accumulates gradients deterministically (fixed loop orders, no
//! parallelism inside a graph).

mod conv;
mod elementwise;
mod field;
mod resize;
mod shuffle;

pub(crate) use field::check_field_dims;

use crate::error::{CoreError, Result};
use crate::resample::ResamplePlan;
use crate::scalar::Scalar;
use crate::tensor::{Dims, TensorData};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) enum Op<S: Scalar> {
    Leaf,
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    MulConst { x: usize, c: S },
    Abs { x: usize },
    Sigmoid { x: usize },
    Mean { x: usize },
    Concat { parts: Vec<usize> },
    ScaleBroadcast { x: usize, scale: usize },
    Conv2d { x: usize, w: usize, b: usize, stride: usize, padding: usize },
    PRelu { x: usize, slope: usize },
    PixelShuffle { x: usize, r: usize },
    InvPixelShuffle { x: usize, r: usize },
    Resize { x: usize, plan_h: ResamplePlan<S>, plan_w: ResamplePlan<S> },
    KernelApply { f: usize, w: usize, k: usize },
    CombineKernels { wg: usize, wt: usize, a: usize },
    NormalizeChannelSum { x: usize, eps: S },
}

pub(crate) struct Node<S: Scalar> {
    pub value: TensorData<S>,
    pub requires_grad: bool,
    pub op: Op<S>,
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
pub struct Gradients<S: Scalar> {
    grads: Vec<Option<Vec<S>>>,
    dims: Vec<Dims>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient for `v`; zeros if the node was unreachable from the loss.
    pub fn get(&self, v: Var) -> TensorData<S> {
        let dims = self.dims[v.0];
        match &self.grads[v.0] {
            Some(g) => TensorData { dims, data: g.clone() },
            None => TensorData::zeros(dims),
        }
    }

    pub fn max_abs(&self, v: Var) -> f64 {
        match &self.grads[v.0] {
            Some(g) => g.iter().map(|x| x.to_f64s().abs()).fold(0.0, f64::max),
            None => 0.0,
        }
    }
}

#[derive(Default)]
pub struct Graph<S: Scalar> {
    pub(crate) nodes: Vec<Node<S>>,
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a value as a graph input. Gradients flow into it only when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: TensorData<S>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: TensorData<S>) -> Var {
        self.leaf(value, false)
    }

    pub fn scalar(&mut self, v: S) -> Var {
        self.constant(TensorData::scalar(v))
    }

    pub fn value(&self, v: Var) -> &TensorData<S> {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> Dims {
        self.nodes[v.0].value.dims
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn push(&mut self, value: TensorData<S>, requires_grad: bool, op: Op<S>) -> Var {
        debug_assert_eq!(value.data.len(), value.dims.numel());
        self.nodes.push(Node { value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Reverse sweep from a scalar `loss`. Values are untouched; the result
    /// holds one gradient buffer per reached node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        let numel = self.nodes[loss.0].value.numel();
        if numel != 1 {
            return Err(CoreError::NonScalarLoss { numel });
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![S::one()]);
        }

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(gy) = grads[id].take() else { continue };
            self.backprop_node(id, &gy, &mut grads);
            // Leaf gradients are the outputs of the sweep; put them back.
            if matches!(self.nodes[id].op, Op::Leaf) {
                grads[id] = Some(gy);
            }
        }

        Ok(Gradients {
            grads,
            dims: self.nodes.iter().map(|n| n.value.dims).collect(),
        })
    }

    /// Add `gy`-derived contributions to the gradients of node `id`'s inputs.
    fn backprop_node(&self, id: usize, gy: &[S], grads: &mut [Option<Vec<S>>]) {
        // Allocates the input's buffer on first touch.
        macro_rules! grad_buf {
            ($input:expr) => {{
                let n = $input;
                if grads[n].is_none() {
                    grads[n] = Some(vec![S::zero(); self.nodes[n].value.numel()]);
                }
                grads[n].as_mut().unwrap()
            }};
        }
        macro_rules! wants {
            ($input:expr) => {
                self.nodes[$input].requires_grad
            };
        }

        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                if wants!(*a) {
                    for (g, gy) in grad_buf!(*a).iter_mut().zip(gy) {
                        *g += *gy;
                    }
                }
                if wants!(*b) {
                    for (g, gy) in grad_buf!(*b).iter_mut().zip(gy) {
                        *g += *gy;
                    }
                }
            }
            Op::Sub { a, b } => {
                if wants!(*a) {
                    for (g, gy) in grad_buf!(*a).iter_mut().zip(gy) {
                        *g += *gy;
                    }
                }
                if wants!(*b) {
                    for (g, gy) in grad_buf!(*b).iter_mut().zip(gy) {
                        *g -= *gy;
                    }
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (&self.nodes[*a].value.data, &self.nodes[*b].value.data);
                if wants!(*a) {
                    let ga = grad_buf!(*a);
                    for i in 0..gy.len() {
                        ga[i] += gy[i] * bv[i];
                    }
                }
                if wants!(*b) {
                    let gb = grad_buf!(*b);
                    for i in 0..gy.len() {
                        gb[i] += gy[i] * av[i];
                    }
                }
            }
            Op::MulConst { x, c } => {
                if wants!(*x) {
                    let c = *c;
                    let gx = grad_buf!(*x);
                    for (g, gy) in gx.iter_mut().zip(gy) {
                        *g += c * *gy;
                    }
                }
            }
            Op::Abs { x } => {
                if wants!(*x) {
                    let xv = &self.nodes[*x].value.data;
                    let gx = grad_buf!(*x);
                    for i in 0..gy.len() {
                        // sign(0) = 0: the subgradient choice pinned here and
                        // mirrored by the finite-difference tests' inputs.
                        let sign = if xv[i] > S::zero() {
                            S::one()
                        } else if xv[i] < S::zero() {
                            -S::one()
                        } else {
                            S::zero()
                        };
                        gx[i] += sign * gy[i];
                    }
                }
            }
            Op::Sigmoid { x } => {
                if wants!(*x) {
                    let yv = &self.nodes[id].value.data;
                    let gx = grad_buf!(*x);
                    for i in 0..gy.len() {
                        gx[i] += yv[i] * (S::one() - yv[i]) * gy[i];
                    }
                }
            }
            Op::Mean { x } => {
                if wants!(*x) {
                    let n = self.nodes[*x].value.numel();
                    let scale = gy[0] / S::from_f64(n as f64);
                    let gx = grad_buf!(*x);
                    for g in gx.iter_mut() {
                        *g += scale;
                    }
                }
            }
            Op::Concat { parts } => {
                let dims = self.nodes[id].value.dims;
                let (h, w) = (dims.h, dims.w);
                let plane = h * w;
                let mut c_off = 0usize;
                for &p in parts {
                    let pc = self.nodes[p].value.dims.c;
                    if wants!(p) {
                        let gp = grad_buf!(p);
                        for n in 0..dims.n {
                            for c in 0..pc {
                                let src = ((n * dims.c + c_off + c) * plane)..((n * dims.c + c_off + c + 1) * plane);
                                let dst = ((n * pc + c) * plane)..((n * pc + c + 1) * plane);
                                for (g, gy) in gp[dst].iter_mut().zip(&gy[src]) {
                                    *g += *gy;
                                }
                            }
                        }
                    }
                    c_off += pc;
                }
            }
            Op::ScaleBroadcast { x, scale } => {
                let sv = self.nodes[*scale].value.data[0];
                let xv = &self.nodes[*x].value.data;
                if wants!(*x) {
                    let gx = grad_buf!(*x);
                    for i in 0..gy.len() {
                        gx[i] += sv * gy[i];
                    }
                }
                if wants!(*scale) {
                    let mut acc = S::zero();
                    for i in 0..gy.len() {
                        acc += xv[i] * gy[i];
                    }
                    let gs = grad_buf!(*scale);
                    gs[0] += acc;
                }
            }
            Op::Conv2d { x, w, b, stride, padding } => {
                self.conv2d_backward(id, *x, *w, *b, *stride, *padding, gy, grads)
            }
            Op::PRelu { x, slope } => self.prelu_backward(*x, *slope, gy, grads),
            Op::PixelShuffle { x, r } => self.pixel_shuffle_backward(id, *x, *r, gy, grads),
            Op::InvPixelShuffle { x, r } => self.inv_pixel_shuffle_backward(id, *x, *r, gy, grads),
            Op::Resize { x, plan_h, plan_w } => self.resize_backward(id, *x, plan_h, plan_w, gy, grads),
            Op::KernelApply { f, w, k } => self.kernel_apply_backward(id, *f, *w, *k, gy, grads),
            Op::CombineKernels { wg, wt, a } => self.combine_kernels_backward(*wg, *wt, *a, gy, grads),
            Op::NormalizeChannelSum { x, eps } => {
                if wants!(*x) {
                    let dims = self.nodes[id].value.dims;
                    let xv = &self.nodes[*x].value;
                    let yv = &self.nodes[id].value;
                    let plane = dims.h * dims.w;
                    let eps = *eps;
                    let gx = grad_buf!(*x);
                    for n in 0..dims.n {
                        for i in 0..plane {
                            let mut sum = S::zero();
                            let mut dot = S::zero();
                            for c in 0..dims.c {
                                let off = (n * dims.c + c) * plane + i;
                                sum += xv.data[off];
                                dot += gy[off] * yv.data[off];
                            }
                            let denom = sum + eps.copysign(sum);
                            for c in 0..dims.c {
                                let off = (n * dims.c + c) * plane + i;
                                gx[off] += (gy[off] - dot) / denom;
                            }
                        }
                    }
                }
            }
        }
    }
}

// Borrow-friendly helper used by the op modules.
pub(crate) fn alloc_grad<S: Scalar>(grads: &mut [Option<Vec<S>>], id: usize, numel: usize) -> &mut [S] {
    if grads[id].is_none() {
        grads[id] = Some(vec![S::zero(); numel]);
    }
    grads[id].as_mut().unwrap()
}
