//! Dense N x C x H x W tensors, row-major, the value storage under the
//! autodiff graph.

use crate::error::{CoreError, Result};
use crate::rng::SeedRng;
use crate::scalar::Scalar;

/// Tensor dimensions in NCHW order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Dims { n, c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Flat offset of element (n, c, y, x).
    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Plain value tensor. Autodiff bookkeeping lives in [`crate::graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData<S: Scalar> {
    pub dims: Dims,
    pub data: Vec<S>,
}

impl<S: Scalar> TensorData<S> {
    pub fn zeros(dims: Dims) -> Self {
        TensorData { dims, data: vec![S::zero(); dims.numel()] }
    }

    pub fn full(dims: Dims, value: S) -> Self {
        TensorData { dims, data: vec![value; dims.numel()] }
    }

    pub fn from_vec(dims: Dims, data: Vec<S>) -> Result<Self> {
        if data.len() != dims.numel() {
            return Err(CoreError::ShapeMismatch(format!(
                "data length {} does not match dims {} ({} elements)",
                data.len(),
                dims,
                dims.numel()
            )));
        }
        Ok(TensorData { dims, data })
    }

    pub fn scalar(value: S) -> Self {
        TensorData { dims: Dims::new(1, 1, 1, 1), data: vec![value] }
    }

    /// Uniform values in [lo, hi), drawn in flat index order.
    pub fn random_uniform(dims: Dims, lo: f64, hi: f64, rng: &mut SeedRng) -> Self {
        let data = (0..dims.numel()).map(|_| rng.uniform_in::<S>(lo, hi)).collect();
        TensorData { dims, data }
    }

    pub fn numel(&self) -> usize {
        self.dims.numel()
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> S {
        self.data[self.dims.at(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: S) {
        let i = self.dims.at(n, c, y, x);
        self.data[i] = v;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(CoreError::NonFinite(format!("{what} contains NaN or infinity")))
        }
    }

    /// Elementwise dtype conversion.
    pub fn cast<T: Scalar>(&self) -> TensorData<T> {
        TensorData {
            dims: self.dims,
            data: self.data.iter().map(|v| T::from_f64(v.to_f64s())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &TensorData<S>) -> f64 {
        assert_eq!(self.dims, other.dims, "max_abs_diff dims");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.to_f64s() - b.to_f64s()).abs())
            .fold(0.0, f64::max)
    }
}
