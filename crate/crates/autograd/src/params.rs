use std::collections::BTreeMap;

use crate::{Gradients, Graph, Result, ShapeError, Tensor, Var};

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

/// How a [`ParamStore`] enters a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BindMode {
    Trainable,
    Frozen,
}

/// Parameters of one store bound into one graph.
pub struct Bindings<'g> {
    vars: BTreeMap<String, Var<'g>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
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

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Entries whose name starts with `prefix`, with the prefix kept.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn extend(&mut self, other: ParamStore) {
        self.tensors.extend(other.tensors);
    }

    pub fn bind<'g>(&self, graph: &'g Graph, mode: BindMode) -> Bindings<'g> {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| {
                let var = match mode {
                    BindMode::Trainable => graph.variable(v.clone()),
                    BindMode::Frozen => graph.constant(v.clone()),
                };
                (k.clone(), var)
            })
            .collect();
        Bindings { vars }
    }
}

impl<'g> Bindings<'g> {
    pub fn get(&self, name: &str) -> Result<Var<'g>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| ShapeError::new("bindings", format!("missing parameter `{name}`")))
    }

    /// Moves the gradient of every bound parameter out of `grads`.
    /// Parameters that did not influence the loss get a zero gradient.
    pub fn collect_grads(&self, grads: &mut Gradients) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, v)| {
                let g = grads
                    .take_id(v.id())
                    .unwrap_or_else(|| Tensor::zeros(&v.shape()));
                (k.clone(), g)
            })
            .collect()
    }
}
