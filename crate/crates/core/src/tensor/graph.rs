use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use super::{Element, Tensor};
use crate::error::{Error, Result};

type BackwardFn<T> = Box<dyn Fn(&[T], &mut GradSink<T>)>;

struct Node<T: Element> {
    value: Rc<Tensor<T>>,
    requires_grad: bool,
    is_leaf: bool,
    backward: Option<BackwardFn<T>>,
}

/// Record of executed ops. Node ids are assigned in execution order, so
/// the id order is a topological order of the computation.
pub struct Graph<T: Element> {
    nodes: RefCell<Vec<Node<T>>>,
    grad_enabled: bool,
}

/// Handle to a node of a [`Graph`].
pub struct Var<'g, T: Element> {
    pub(crate) graph: &'g Graph<T>,
    pub(crate) id: usize,
}

impl<T: Element> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Element> Copy for Var<'_, T> {}

impl<T: Element> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{}, {:?})", self.id, self.shape())
    }
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()), grad_enabled: true }
    }

    /// A graph that never records backward closures. Parameters become
    /// constants; useful for inference.
    pub fn inference() -> Self {
        Self { nodes: RefCell::new(Vec::new()), grad_enabled: false }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, self.grad_enabled)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), requires_grad, is_leaf: true, backward: None });
        Var { graph: self, id: nodes.len() - 1 }
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    pub(crate) fn requires_grad_of(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Append an op result. `backward` receives the upstream gradient of
    /// this node and routes contributions to `parents` through the sink.
    pub(crate) fn push<F>(&self, value: Tensor<T>, parents: &[usize], backward: F) -> Var<'_, T>
    where
        F: Fn(&[T], &mut GradSink<T>) + 'static,
    {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = self.grad_enabled && parents.iter().any(|&p| nodes[p].requires_grad);
        let backward: Option<BackwardFn<T>> =
            if requires_grad { Some(Box::new(backward)) } else { None };
        nodes.push(Node { value: Rc::new(value), requires_grad, is_leaf: false, backward });
        Var { graph: self, id: nodes.len() - 1 }
    }

    /// Reverse-mode sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let mut grads = Gradients::default();
        self.backward_into(loss, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Graph::backward`] but sums into existing gradients.
    pub fn backward_into(&self, loss: Var<'_, T>, out: &mut Gradients<T>) -> Result<()> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got shape {:?}", root.value.shape()),
            ));
        }
        let requires: Vec<bool> = nodes.iter().map(|n| n.requires_grad).collect();
        let mut sink = GradSink { grads: vec![None; loss.id + 1], requires: &requires };
        if !requires[loss.id] {
            return Ok(());
        }
        sink.grads[loss.id] = Some(vec![T::one()]);
        for id in (0..=loss.id).rev() {
            let Some(grad) = sink.grads[id].take() else { continue };
            let node = &nodes[id];
            if node.is_leaf {
                if node.requires_grad {
                    out.accumulate(id, node.value.shape(), grad);
                }
            } else if let Some(bw) = &node.backward {
                bw(&grad, &mut sink);
            }
        }
        Ok(())
    }
}

/// Gradient routing during a backward sweep.
pub(crate) struct GradSink<'a, T> {
    grads: Vec<Option<Vec<T>>>,
    requires: &'a [bool],
}

impl<T: Element> GradSink<'_, T> {
    pub(crate) fn wants(&self, id: usize) -> bool {
        self.requires[id]
    }

    /// Accumulation buffer for node `id`, zero-filled on first use.
    pub(crate) fn slot(&mut self, id: usize, len: usize) -> &mut [T] {
        let g = self.grads[id].get_or_insert_with(|| vec![T::zero(); len]);
        debug_assert_eq!(g.len(), len);
        g
    }

    /// Elementwise contribution `g[i] += f(i)` when `id` needs a gradient.
    pub(crate) fn add_with(&mut self, id: usize, len: usize, f: impl Fn(usize) -> T) {
        if !self.wants(id) {
            return;
        }
        for (i, s) in self.slot(id, len).iter_mut().enumerate() {
            *s += f(i);
        }
    }
}

/// Leaf gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    by_node: BTreeMap<usize, Tensor<T>>,
}

impl<T> Default for Gradients<T> {
    fn default() -> Self {
        Self { by_node: BTreeMap::new() }
    }
}

impl<T: Element> Gradients<T> {
    fn accumulate(&mut self, id: usize, shape: &[usize], grad: Vec<T>) {
        match self.by_node.get_mut(&id) {
            Some(t) => t.data_mut().iter_mut().zip(grad).for_each(|(a, b)| *a += b),
            None => {
                let t = Tensor { shape: shape.to_vec(), data: grad };
                self.by_node.insert(id, t);
            }
        }
    }

    /// Gradient of `var`; all zeros when the loss does not depend on it.
    pub fn get(&self, var: Var<'_, T>) -> Tensor<T> {
        match self.by_node.get(&var.id) {
            Some(t) => t.clone(),
            None => Tensor::zeros(var.shape()),
        }
    }

    pub fn contains(&self, var: Var<'_, T>) -> bool {
        self.by_node.contains_key(&var.id)
    }
}

impl<'g, T: Element> Var<'g, T> {
    pub fn value(&self) -> Rc<Tensor<T>> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.graph.nodes.borrow()[self.id].value.numel()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.requires_grad_of(self.id)
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub(crate) fn same_graph(&self, other: &Var<'_, T>) -> bool {
        std::ptr::eq(self.graph, other.graph)
    }
}
