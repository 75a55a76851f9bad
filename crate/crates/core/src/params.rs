//! Named parameter storage and its binding into a graph.

use indexmap::IndexMap;

use crate::error::{CoreError, Result};
use crate::graph::{Gradients, Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::TensorData;

/// One named tensor. Non-trainable entries (fixed constants a model wants
/// checkpointed) are bound without gradient tracking.
#[derive(Debug, Clone)]
pub struct Parameter<S: Scalar> {
    pub value: TensorData<S>,
    pub trainable: bool,
}

/// Ordered name -> parameter map. Iteration order is insertion order, which
/// the registration code keeps deterministic; every consumer (init, Adam,
/// checkpoints, gradient checks) relies on that.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<S: Scalar> {
    entries: IndexMap<String, Parameter<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore { entries: IndexMap::new() }
    }

    pub fn insert(&mut self, name: &str, value: TensorData<S>, trainable: bool) {
        let prev = self.entries.insert(name.to_string(), Parameter { value, trainable });
        assert!(prev.is_none(), "duplicate parameter name `{name}`");
    }

    pub fn get(&self, name: &str) -> Result<&Parameter<S>> {
        self.entries
            .get(name)
            .ok_or_else(|| CoreError::UnknownParameter { name: name.to_string() })
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Parameter<S>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| CoreError::UnknownParameter { name: name.to_string() })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Parameter<S>)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn numel(&self) -> usize {
        self.entries.values().map(|p| p.value.numel()).sum()
    }

    /// Restrict training to parameters whose names start with one of the
    /// given prefixes (focused gradient checks use this).
    pub fn set_trainable_only(&mut self, prefixes: &[&str]) {
        for (name, p) in self.entries.iter_mut() {
            p.trainable = prefixes.iter().any(|pre| name.starts_with(pre));
        }
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (name, p) in &self.entries {
            out.insert(name, p.value.cast::<T>(), p.trainable);
        }
        out
    }

    /// Insert every parameter into `graph` as a leaf; trainable entries
    /// track gradients.
    pub fn bind(&self, graph: &mut Graph<S>) -> BoundParams {
        let mut vars = IndexMap::with_capacity(self.entries.len());
        for (name, p) in &self.entries {
            let var = graph.leaf(p.value.clone(), p.trainable);
            vars.insert(name.clone(), var);
        }
        BoundParams { vars }
    }
}

/// The graph handles of one [`ParamStore::bind`] call.
pub struct BoundParams {
    vars: IndexMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` was not bound"))
    }

    pub fn try_var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| CoreError::UnknownParameter { name: name.to_string() })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, Var)> {
        self.vars.iter().map(|(n, v)| (n, *v))
    }

    /// Gradients of all trainable parameters keyed by name; parameters the
    /// loss never reached come back as zeros.
    pub fn collect_gradients<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        grads: &Gradients<S>,
    ) -> IndexMap<String, TensorData<S>> {
        let mut out = IndexMap::with_capacity(self.vars.len());
        for (name, var) in &self.vars {
            if store.entries[name].trainable {
                out.insert(name.clone(), grads.get(*var));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims;

    #[test]
    fn binding_and_gradient_collection() {
        let mut store = ParamStore::<f64>::new();
        store.insert("a", TensorData::full(Dims::new(1, 1, 1, 2), 2.0), true);
        store.insert("fixed", TensorData::full(Dims::new(1, 1, 1, 2), 5.0), false);
        store.insert("unused", TensorData::full(Dims::new(1, 1, 1, 1), 1.0), true);

        let mut g = Graph::new();
        let bound = store.bind(&mut g);
        let prod = g.mul(bound.var("a"), bound.var("fixed")).unwrap();
        let loss = g.mean(prod);
        let grads = g.backward(loss).unwrap();
        let by_name = bound.collect_gradients(&store, &grads);

        assert_eq!(by_name.len(), 2); // `fixed` is not trainable
        assert_eq!(by_name["a"].data, vec![2.5, 2.5]);
        assert_eq!(by_name["unused"].data, vec![0.0]);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_names_panic() {
        let mut store = ParamStore::<f64>::new();
        store.insert("x", TensorData::scalar(1.0), true);
        store.insert("x", TensorData::scalar(2.0), true);
    }
}
