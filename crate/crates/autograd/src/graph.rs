use std::cell::RefCell;
use std::sync::Arc;

use crate::{Real, Tensor};

/// Computes parent gradients from the output gradient. The boolean slice
/// tells which parents actually need one; entries for the others may be
/// `None`.
pub(crate) type BackwardFn<F> = Box<dyn Fn(&Tensor<F>, &[bool]) -> Vec<Option<Tensor<F>>>>;

struct Node<F> {
    value: Arc<Tensor<F>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<F>>,
    requires_grad: bool,
}

/// A recording tape. One graph per forward pass.
pub struct Graph<F> {
    nodes: RefCell<Vec<Node<F>>>,
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, F> {
    pub(crate) graph: &'g Graph<F>,
    pub(crate) id: usize,
}

impl<F> std::fmt::Debug for Var<'_, F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}", self.id)
    }
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf that receives a gradient.
    pub fn leaf(&self, value: impl Into<Arc<Tensor<F>>>) -> Var<'_, F> {
        self.push_leaf(value.into(), true)
    }

    /// Leaf without a gradient (inputs, targets, masks).
    pub fn constant(&self, value: impl Into<Arc<Tensor<F>>>) -> Var<'_, F> {
        self.push_leaf(value.into(), false)
    }

    fn push_leaf(&self, value: Arc<Tensor<F>>, requires_grad: bool) -> Var<'_, F> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    pub(crate) fn value_of(&self, id: usize) -> Arc<Tensor<F>> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Records an op result. `make_backward` only runs when some parent
    /// needs a gradient, so inference graphs store no closures.
    pub(crate) fn push_op(
        &self,
        value: Tensor<F>,
        parents: &[Var<'_, F>],
        make_backward: impl FnOnce() -> BackwardFn<F>,
    ) -> Var<'_, F> {
        let ids: Vec<usize> = parents.iter().map(|p| p.id).collect();
        let requires_grad = ids.iter().any(|&i| self.requires_grad(i));
        let backward = requires_grad.then(make_backward);
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Arc::new(value),
            parents: ids,
            backward,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Reverse pass from a scalar root.
    pub fn backward(&self, root: Var<'_, F>) -> Gradients<F> {
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[root.id].value.numel(),
            1,
            "backward root must be a scalar"
        );
        let mut grads: Vec<Option<Tensor<F>>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.id] = Some(Tensor::full(
            nodes[root.id].value.shape().to_vec(),
            F::one(),
        ));
        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| nodes[p].requires_grad)
                .collect();
            let parent_grads = backward(&g, &needs);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for ((&p, pg), need) in node.parents.iter().zip(parent_grads).zip(needs) {
                let Some(pg) = pg else { continue };
                if !need {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[p].value.shape(), "grad shape for node {p}");
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Gradients { grads }
    }
}

/// Gradients of leaves after [`Graph::backward`].
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, var: Var<'_, F>) -> Option<&Tensor<F>> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var<'_, F>) -> Option<Tensor<F>> {
        self.grads.get_mut(var.id).and_then(|g| g.take())
    }
}

impl<'g, F: Real> Var<'g, F> {
    pub fn value(&self) -> Arc<Tensor<F>> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn graph(&self) -> &'g Graph<F> {
        self.graph
    }
}
