//! Tape-based reverse-mode differentiation.
//!
//! Every op pushes a node holding a closure that maps the output gradient to
//! parent gradients. Backward only visits nodes that lie on a path between a
//! root and one of the requested variables, so the same tape can be replayed
//! for different targets (parameters, inputs) without recomputing the forward.

use std::cell::RefCell;
use std::sync::Arc;

use crate::tensor::{Float, Tensor};

pub type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T: Float> {
    parents: Vec<usize>,
    shape: Vec<usize>,
    backward: Option<BackwardFn<T>>,
}

pub struct Graph<T: Float = f32> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Float> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// A value recorded on a [`Graph`].
#[derive(Clone)]
pub struct Var<'g, T: Float = f32> {
    graph: &'g Graph<T>,
    id: usize,
    value: Arc<Tensor<T>>,
}

impl<'g, T: Float> Var<'g, T> {
    #[inline]
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shared_value(&self) -> Arc<Tensor<T>> {
        Arc::clone(&self.value)
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    #[inline]
    pub fn id(&self) -> usize {
        self.id
    }

    #[inline]
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf_shared(Arc::new(value))
    }

    pub fn leaf_shared(&self, value: Arc<Tensor<T>>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents: Vec::new(), shape: value.shape().to_vec(), backward: None });
        Var { graph: self, id: nodes.len() - 1, value }
    }

    pub(crate) fn push(&self, value: Tensor<T>, parents: &[&Var<'_, T>], backward: BackwardFn<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            parents: parents.iter().map(|p| p.id).collect(),
            shape: value.shape().to_vec(),
            backward: Some(backward),
        });
        Var { graph: self, id: nodes.len() - 1, value: Arc::new(value) }
    }

    /// Accumulates `Σ seed_r · ∂root_r/∂wrt` for every requested variable.
    ///
    /// Variables unreachable from the roots receive zero gradients.
    pub fn backward(&self, roots: &[(&Var<'_, T>, Tensor<T>)], wrt: &[&Var<'_, T>]) -> Vec<Tensor<T>> {
        let nodes = self.nodes.borrow();
        let n = nodes.len();
        let mut needs = vec![false; n];
        for v in wrt {
            needs[v.id] = true;
        }
        for i in 0..n {
            if !needs[i] && nodes[i].parents.iter().any(|&p| needs[p]) {
                needs[i] = true;
            }
        }
        let mut is_target = vec![false; n];
        for v in wrt {
            is_target[v.id] = true;
        }

        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        for (root, seed) in roots {
            assert_eq!(seed.shape(), root.shape(), "seed shape must match root");
            accumulate(&mut grads[root.id], seed.clone());
        }

        for i in (0..n).rev() {
            if !needs[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if let Some(backward) = &node.backward {
                let flags: Vec<bool> = node.parents.iter().map(|&p| needs[p]).collect();
                let parent_grads = backward(&g, &flags);
                for ((&p, pg), &flag) in node.parents.iter().zip(parent_grads).zip(&flags) {
                    if let (true, Some(pg)) = (flag, pg) {
                        debug_assert_eq!(pg.shape(), nodes[p].shape.as_slice());
                        accumulate(&mut grads[p], pg);
                    }
                }
            }
            if is_target[i] {
                grads[i] = Some(g);
            }
        }

        wrt.iter()
            .map(|v| grads[v.id].clone().unwrap_or_else(|| Tensor::zeros(&nodes[v.id].shape)))
            .collect()
    }
}

fn accumulate<T: Float>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => *slot = Some(g),
    }
}
