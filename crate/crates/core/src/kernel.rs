//! Spatially-varying kernel fields: one k x k filter per pixel, stored as a
//! k^2-channel map. The differentiable apply/combine ops live on
//! [`crate::graph::Graph`]; this module holds the typed wrapper, the
//! literal nested-loop reference implementation, and the dump format.

use std::path::Path;

use crate::error::{CoreError, Result};
use crate::graph::{Graph, Var};
use crate::image::{save_fimg, Image, ValueRange};
use crate::scalar::Scalar;
use crate::tensor::{Dims, TensorData};

/// Kernel field over a (batch, height, width) grid with odd kernel size k.
#[derive(Debug, Clone)]
pub struct KernelField<S: Scalar> {
    pub k: usize,
    pub weights: TensorData<S>,
}

impl<S: Scalar> KernelField<S> {
    pub fn new(k: usize, weights: TensorData<S>) -> Result<Self> {
        if k.is_multiple_of(2) || k == 0 {
            return Err(CoreError::InvalidParameter(format!("kernel size {k} must be odd")));
        }
        if weights.dims.c != k * k {
            return Err(CoreError::ShapeMismatch(format!(
                "kernel field needs k^2 = {} channels, got {}",
                k * k,
                weights.dims.c
            )));
        }
        if !weights.all_finite() {
            return Err(CoreError::NonFinite("kernel field weights".into()));
        }
        Ok(KernelField { k, weights })
    }

    /// Delta field: center weight 1, everything else 0 (identity filter).
    pub fn delta(k: usize, n: usize, h: usize, w: usize) -> Result<Self> {
        let mut weights = TensorData::zeros(Dims::new(n, k * k, h, w));
        let center = (k / 2) * k + k / 2;
        for b in 0..n {
            for y in 0..h {
                for x in 0..w {
                    weights.set(b, center, y, x, S::one());
                }
            }
        }
        KernelField::new(k, weights)
    }

    pub fn dims(&self) -> Dims {
        self.weights.dims
    }

    /// Dump as the raw float container (c = k^2) plus a `.k` sidecar holding
    /// the kernel size, batch entry 0 only.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let d = self.weights.dims;
        let single = TensorData::from_vec(
            Dims::new(1, d.c, d.h, d.w),
            self.weights.data[..d.c * d.h * d.w].to_vec(),
        )?;
        let img = Image::from_tensor(&single, ValueRange::Metric)?;
        save_fimg(&img, path)?;
        let sidecar = path.with_extension(format!(
            "{}k",
            path.extension().map(|e| format!("{}.", e.to_string_lossy())).unwrap_or_default()
        ));
        std::fs::write(sidecar, format!("{}\n", self.k))?;
        Ok(())
    }
}

/// Literal five-nested-loop reference for kernel-field filtering; same
/// contract as [`Graph::apply_kernel_field`], kept deliberately naive.
pub fn apply_kernel_field_naive<S: Scalar>(f: &TensorData<S>, field: &KernelField<S>) -> Result<TensorData<S>> {
    let fd = f.dims;
    let wd = field.weights.dims;
    crate::graph::check_field_dims(fd, wd, field.k)?;
    let k = field.k as isize;
    let s = k / 2;
    let mut out = TensorData::zeros(fd);
    for n in 0..fd.n {
        for c in 0..fd.c {
            for u in 0..fd.h as isize {
                for v in 0..fd.w as isize {
                    let mut acc = S::zero();
                    for dy in -s..=s {
                        for dx in -s..=s {
                            let (sy, sx) = (u - dy, v - dx);
                            if sy < 0 || sy >= fd.h as isize || sx < 0 || sx >= fd.w as isize {
                                continue;
                            }
                            let ch = ((dy + s) * k + (dx + s)) as usize;
                            acc += field.weights.get(n, ch, u as usize, v as usize)
                                    * f.get(n, c, sy as usize, sx as usize);
                        }
                    }
                    out.set(n, c, u as usize, v as usize, acc);
                }
            }
        }
    }
    Ok(out)
}

/// Graph-level helper: wrap a kernel field value as a constant and apply it.
pub fn apply_field_const<S: Scalar>(g: &mut Graph<S>, f: Var, field: &KernelField<S>) -> Result<Var> {
    let w = g.constant(field.weights.clone());
    g.apply_kernel_field(f, w, field.k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{streams, SeedRng};

    #[test]
    fn naive_delta_identity_is_exact() {
        let mut rng = SeedRng::new(61, streams::TEST);
        let f = TensorData::<f64>::random_uniform(Dims::new(1, 2, 5, 6), -1.0, 1.0, &mut rng);
        let field = KernelField::delta(3, 1, 5, 6).unwrap();
        let out = apply_kernel_field_naive(&f, &field).unwrap();
        assert_eq!(out.data, f.data);
    }

    #[test]
    fn naive_single_pixel_is_center_weight_times_pixel() {
        let f = TensorData::<f64>::full(Dims::new(1, 1, 1, 1), 2.0);
        let mut w = TensorData::<f64>::zeros(Dims::new(1, 9, 1, 1));
        w.set(0, 4, 0, 0, 0.25);
        let field = KernelField::new(3, w).unwrap();
        let out = apply_kernel_field_naive(&f, &field).unwrap();
        assert_eq!(out.data, vec![0.5]);
    }

    #[test]
    fn graph_apply_agrees_with_naive_over_100_seeds() {
        for seed in 0..100u64 {
            let mut rng = SeedRng::new(seed, streams::TEST);
            let k = [1usize, 3, 5][(seed % 3) as usize];
            let f = TensorData::<f64>::random_uniform(Dims::new(1, 2, 6, 6), -1.0, 1.0, &mut rng);
            let wv = TensorData::<f64>::random_uniform(Dims::new(1, k * k, 6, 6), -1.0, 1.0, &mut rng);
            let field = KernelField::new(k, wv.clone()).unwrap();
            let naive = apply_kernel_field_naive(&f, &field).unwrap();

            let mut g = Graph::<f64>::new();
            let fv = g.constant(f.clone());
            let wvar = g.constant(wv);
            let y = g.apply_kernel_field(fv, wvar, k).unwrap();
            assert!(
                g.value(y).max_abs_diff(&naive) <= 1e-6,
                "seed {seed} k {k}"
            );
        }
    }

    #[test]
    fn apply_is_linear_in_both_arguments() {
        let mut rng = SeedRng::new(62, streams::TEST);
        let d = Dims::new(1, 2, 5, 5);
        let wd = Dims::new(1, 9, 5, 5);
        let f1 = TensorData::<f64>::random_uniform(d, -1.0, 1.0, &mut rng);
        let f2 = TensorData::<f64>::random_uniform(d, -1.0, 1.0, &mut rng);
        let w1 = TensorData::<f64>::random_uniform(wd, -1.0, 1.0, &mut rng);
        let w2 = TensorData::<f64>::random_uniform(wd, -1.0, 1.0, &mut rng);

        let apply = |f: &TensorData<f64>, w: &TensorData<f64>| -> TensorData<f64> {
            apply_kernel_field_naive(f, &KernelField::new(3, w.clone()).unwrap()).unwrap()
        };
        let add = |a: &TensorData<f64>, b: &TensorData<f64>| -> TensorData<f64> {
            TensorData::from_vec(a.dims, a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect())
                .unwrap()
        };

        let lhs = apply(&add(&f1, &f2), &w1);
        let rhs = add(&apply(&f1, &w1), &apply(&f2, &w1));
        assert!(lhs.max_abs_diff(&rhs) <= 1e-6);

        let lhs = apply(&f1, &add(&w1, &w2));
        let rhs = add(&apply(&f1, &w1), &apply(&f1, &w2));
        assert!(lhs.max_abs_diff(&rhs) <= 1e-6);
    }

    #[test]
    fn per_pixel_kernel_is_shared_across_channels() {
        // Permuting feature channels commutes with the filtering.
        let mut rng = SeedRng::new(63, streams::TEST);
        let d = Dims::new(1, 3, 4, 4);
        let f = TensorData::<f64>::random_uniform(d, -1.0, 1.0, &mut rng);
        let w = TensorData::<f64>::random_uniform(Dims::new(1, 9, 4, 4), -1.0, 1.0, &mut rng);
        let field = KernelField::new(3, w).unwrap();

        let perm = [2usize, 0, 1];
        let mut f_perm = TensorData::<f64>::zeros(d);
        for (dst, src) in perm.iter().enumerate() {
            for y in 0..4 {
                for x in 0..4 {
                    f_perm.set(0, dst, y, x, f.get(0, *src, y, x));
                }
            }
        }
        let out = apply_kernel_field_naive(&f, &field).unwrap();
        let out_perm = apply_kernel_field_naive(&f_perm, &field).unwrap();
        for (dst, src) in perm.iter().enumerate() {
            for y in 0..4 {
                for x in 0..4 {
                    assert_eq!(out_perm.get(0, dst, y, x), out.get(0, *src, y, x));
                }
            }
        }
    }

    #[test]
    fn field_constructor_validates() {
        assert!(KernelField::new(2, TensorData::<f64>::zeros(Dims::new(1, 4, 2, 2))).is_err());
        assert!(KernelField::new(3, TensorData::<f64>::zeros(Dims::new(1, 8, 2, 2))).is_err());
        let mut bad = TensorData::<f64>::zeros(Dims::new(1, 9, 2, 2));
        bad.data[0] = f64::NAN;
        assert!(KernelField::new(3, bad).is_err());
    }
}
