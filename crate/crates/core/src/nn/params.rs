use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::graph::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

/// Named parameter tensors of one network, kept in name order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T: Float = f32> {
    tensors: BTreeMap<String, Arc<Tensor<T>>>,
}

impl<T: Float> Default for ParamStore<T> {
    fn default() -> Self {
        Self { tensors: BTreeMap::new() }
    }
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.tensors.insert(name.into(), Arc::new(value));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name).map(|t| t.as_ref())
    }

    /// Copy-on-write access; clones only if a graph still holds the tensor.
    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name).map(Arc::make_mut)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), Arc::make_mut(v)))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.values().map(|t| t.numel()).sum()
    }

    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore { tensors: self.tensors.iter().map(|(k, v)| (k.clone(), Arc::new(v.cast()))).collect() }
    }

    /// Same names with the same shapes.
    pub fn check_layout(&self, other: &Self) -> Result<()> {
        let a: Vec<_> = self.iter().map(|(k, v)| (k, v.shape())).collect();
        let b: Vec<_> = other.iter().map(|(k, v)| (k, v.shape())).collect();
        if a != b {
            let missing: Vec<_> = self.names().filter(|n| other.get(n).is_none()).collect();
            let extra: Vec<_> = other.names().filter(|n| self.get(n).is_none()).collect();
            return Err(Error::Shape(format!(
                "parameter layout mismatch (missing {missing:?}, unexpected {extra:?}, or shape differences)"
            )));
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self { tensors: self.tensors.iter().map(|(k, v)| (k.clone(), Arc::new(Tensor::zeros(v.shape())))).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(|t| t.is_finite())
    }
}

/// Parameters of one network placed on a graph as leaf variables.
pub struct Bound<'g, T: Float = f32> {
    graph: &'g Graph<T>,
    vars: BTreeMap<String, Var<'g, T>>,
    used: RefCell<BTreeSet<String>>,
}

impl<'g, T: Float> Bound<'g, T> {
    pub fn new(graph: &'g Graph<T>, store: &ParamStore<T>) -> Self {
        let vars = store.tensors.iter().map(|(k, v)| (k.clone(), graph.leaf_shared(Arc::clone(v)))).collect();
        Self { graph, vars, used: RefCell::new(BTreeSet::new()) }
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    /// Panics on unknown names: layouts are validated when bundles load.
    pub fn var(&self, name: &str) -> &Var<'g, T> {
        self.used.borrow_mut().insert(name.to_string());
        self.vars.get(name).unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn try_var(&self, name: &str) -> Option<&Var<'g, T>> {
        let v = self.vars.get(name);
        if v.is_some() {
            self.used.borrow_mut().insert(name.to_string());
        }
        v
    }

    /// Parameter names never read by a forward pass so far.
    pub fn unused(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.vars.keys().filter(|k| !used.contains(*k)).cloned().collect()
    }

    /// Backpropagates `roots` into every bound parameter.
    pub fn gradients(&self, roots: &[(&Var<'g, T>, Tensor<T>)]) -> ParamStore<T> {
        let wrt: Vec<&Var<'g, T>> = self.vars.values().collect();
        let grads = self.graph.backward(roots, &wrt);
        ParamStore { tensors: self.vars.keys().cloned().zip(grads.into_iter().map(Arc::new)).collect() }
    }
}
