use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::{Graph, Gradients, Real, Tensor, Var};

/// Named parameters, keyed by hierarchical dotted names such as
/// `unet.down.0.res.conv1.weight`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<F> {
    tensors: BTreeMap<String, Arc<Tensor<F>>>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<F>) {
        let name = name.into();
        let prev = self.tensors.insert(name.clone(), Arc::new(value));
        assert!(prev.is_none(), "duplicate parameter {name}");
    }

    /// Replaces an existing parameter, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor<F>) {
        let slot = self
            .tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        assert_eq!(slot.shape(), value.shape(), "shape change for {name}");
        *slot = Arc::new(value);
    }

    pub fn get(&self, name: &str) -> Option<&Arc<Tensor<F>>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.tensors.get_mut(name).map(Arc::make_mut)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Arc<Tensor<F>>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<F>)> {
        self.tensors
            .iter_mut()
            .map(|(k, v)| (k.as_str(), Arc::make_mut(v)))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(|t| t.numel()).sum()
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Arc::new(v.cast())))
                .collect(),
        }
    }

    /// Keeps only parameters whose name starts with `prefix`.
    pub fn filter_prefix(&self, prefix: &str) -> ParamStore<F> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.all_finite())
    }
}

/// Binds parameters from a store onto a graph on first use.
pub struct Session<'g, F> {
    graph: &'g Graph<F>,
    params: &'g ParamStore<F>,
    trainable: bool,
    bound: RefCell<HashMap<String, Var<'g, F>>>,
}

impl<'g, F: Real> Session<'g, F> {
    /// Parameters become gradient-receiving leaves.
    pub fn train(graph: &'g Graph<F>, params: &'g ParamStore<F>) -> Self {
        Self::with_mode(graph, params, true)
    }

    /// Parameters become constants; no backward closures are recorded.
    pub fn infer(graph: &'g Graph<F>, params: &'g ParamStore<F>) -> Self {
        Self::with_mode(graph, params, false)
    }

    fn with_mode(graph: &'g Graph<F>, params: &'g ParamStore<F>, trainable: bool) -> Self {
        Self {
            graph,
            params,
            trainable,
            bound: RefCell::new(HashMap::new()),
        }
    }

    pub fn graph(&self) -> &'g Graph<F> {
        self.graph
    }

    pub fn params(&self) -> &'g ParamStore<F> {
        self.params
    }

    pub fn param(&self, name: &str) -> Var<'g, F> {
        if let Some(v) = self.bound.borrow().get(name) {
            return *v;
        }
        let t = self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
            .clone();
        let v = if self.trainable {
            self.graph.leaf(t)
        } else {
            self.graph.constant(t)
        };
        self.bound.borrow_mut().insert(name.to_string(), v);
        v
    }

    pub fn input(&self, value: Tensor<F>) -> Var<'g, F> {
        self.graph.constant(value)
    }

    /// Gradients for every parameter in the store; parameters that did not
    /// take part in the forward pass get zeros.
    pub fn collect_grads(&self, grads: &mut Gradients<F>) -> GradStore<F> {
        let bound = self.bound.borrow();
        let tensors = self
            .params
            .iter()
            .map(|(name, value)| {
                let g = bound
                    .get(name)
                    .and_then(|v| grads.take(*v))
                    .unwrap_or_else(|| Tensor::zeros(value.shape().to_vec()));
                (name.to_string(), g)
            })
            .collect();
        GradStore { tensors }
    }
}

/// Gradients keyed like the [`ParamStore`] they belong to.
#[derive(Clone, Debug, Default)]
pub struct GradStore<F> {
    tensors: BTreeMap<String, Tensor<F>>,
}

impl<F: Real> GradStore<F> {
    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.tensors.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn global_norm(&self) -> F {
        self.tensors
            .values()
            .map(|t| t.sum_sq())
            .sum::<F>()
            .sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: F) -> F {
        let norm = self.global_norm();
        if norm > max_norm {
            let s = max_norm / norm;
            for t in self.tensors.values_mut() {
                *t = t.scale(s);
            }
        }
        norm
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.all_finite())
    }
}
