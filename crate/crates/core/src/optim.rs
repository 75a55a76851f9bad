//! Adam with bias correction, the only optimizer the training loop needs.

use indexmap::IndexMap;

use crate::error::{CoreError, Result};
use crate::params::ParamStore;
use crate::scalar::{s, Scalar};
use crate::tensor::TensorData;

/// Optimizer hyper-parameters and per-parameter moment buffers.
#[derive(Debug, Clone)]
pub struct OptimizerState<S: Scalar> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    pub first_moment: IndexMap<String, Vec<S>>,
    pub second_moment: IndexMap<String, Vec<S>>,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(learning_rate: f64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        OptimizerState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: IndexMap::new(),
            second_moment: IndexMap::new(),
        }
    }
}

/// One Adam update over every trainable parameter in `store`.
///
/// `grads` must hold a gradient for each trainable parameter (zeros are
/// fine); a missing entry is an error naming the parameter.
pub fn adam_step<S: Scalar>(
    store: &mut ParamStore<S>,
    grads: &IndexMap<String, TensorData<S>>,
    state: &mut OptimizerState<S>,
) -> Result<()> {
    state.step_count += 1;
    let t = state.step_count as f64;
    let bias1 = 1.0 - state.beta1.powf(t);
    let bias2 = 1.0 - state.beta2.powf(t);
    let (b1, b2) = (s::<S>(state.beta1), s::<S>(state.beta2));
    let one = S::one();
    let lr = s::<S>(state.learning_rate / bias1);
    let inv_bias2 = s::<S>(1.0 / bias2);
    let eps = s::<S>(state.epsilon);

    let names: Vec<String> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(n, _)| n.clone())
        .collect();
    for name in names {
        let grad = grads
            .get(&name)
            .ok_or_else(|| CoreError::MissingGradient { name: name.clone() })?;
        let param = store.get_mut(&name)?;
        if grad.dims != param.value.dims {
            return Err(CoreError::ShapeMismatch(format!(
                "gradient for `{name}` is {}, parameter is {}",
                grad.dims, param.value.dims
            )));
        }
        let n = param.value.numel();
        let m = state
            .first_moment
            .entry(name.clone())
            .or_insert_with(|| vec![S::zero(); n]);
        let v = state
            .second_moment
            .entry(name.clone())
            .or_insert_with(|| vec![S::zero(); n]);
        for i in 0..n {
            let g = grad.data[i];
            m[i] = b1 * m[i] + (one - b1) * g;
            v[i] = b2 * v[i] + (one - b2) * g * g;
            let denom = (v[i] * inv_bias2).sqrt() + eps;
            param.value.data[i] -= lr * m[i] / denom;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims;

    fn scalar_store(v: f64) -> ParamStore<f64> {
        let mut store = ParamStore::new();
        store.insert("p", TensorData::scalar(v), true);
        store
    }

    fn grads_of(v: f64) -> IndexMap<String, TensorData<f64>> {
        let mut g = IndexMap::new();
        g.insert("p".to_string(), TensorData::scalar(v));
        g
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = scalar_store(1.5);
        let mut state = OptimizerState::new(0.1);
        adam_step(&mut store, &grads_of(0.0), &mut state).unwrap();
        assert_eq!(store.get("p").unwrap().value.data[0], 1.5);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // Hand-computed bias-corrected first step: m_hat = g, v_hat = g^2,
        // so the update is lr * g / (|g| + eps) ~= lr * sign(g).
        let mut store = scalar_store(0.0);
        let mut state = OptimizerState::new(0.1);
        adam_step(&mut store, &grads_of(1.0), &mut state).unwrap();
        let p = store.get("p").unwrap().value.data[0];
        assert!((p + 0.1).abs() < 1e-8, "p = {p}");
    }

    #[test]
    fn constant_gradient_drifts_monotonically() {
        let mut store = scalar_store(0.0);
        let mut state = OptimizerState::new(0.05);
        let mut last = 0.0;
        for _ in 0..20 {
            adam_step(&mut store, &grads_of(2.0), &mut state).unwrap();
            let p = store.get("p").unwrap().value.data[0];
            assert!(p < last, "drift should be monotone: {p} >= {last}");
            last = p;
        }
        assert_eq!(state.step_count, 20);
    }

    #[test]
    fn missing_gradient_names_the_parameter() {
        let mut store = scalar_store(0.0);
        let mut state = OptimizerState::new(0.1);
        let empty = IndexMap::new();
        match adam_step(&mut store, &empty, &mut state) {
            Err(CoreError::MissingGradient { name }) => assert_eq!(name, "p"),
            other => panic!("expected MissingGradient, got {other:?}"),
        }
    }

    #[test]
    fn moment_buffers_match_parameter_shapes() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", TensorData::full(Dims::new(2, 1, 3, 3), 0.5), true);
        let mut grads = IndexMap::new();
        grads.insert("w".to_string(), TensorData::full(Dims::new(2, 1, 3, 3), 0.1));
        let mut state = OptimizerState::new(0.01);
        adam_step(&mut store, &grads, &mut state).unwrap();
        assert_eq!(state.first_moment["w"].len(), 18);
        assert_eq!(state.second_moment["w"].len(), 18);
    }
}
