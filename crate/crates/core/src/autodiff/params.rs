use std::ops::Index;

use serde::{Deserialize, Serialize};

use super::{Gradients, Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    /// Position in the store, matching the order of gradient vectors.
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors owned by a model. Order of insertion is the
/// order of serialization and of optimizer state.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ParamStore {
    entries: Vec<NamedTensor>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub value: Tensor,
}

/// Parameters bound as leaves on one graph.
#[derive(Debug, Clone)]
pub struct Binding(Vec<Var>);

impl Index<ParamId> for Binding {
    type Output = Var;
    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

impl Binding {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.entries.push(NamedTensor {
            name: name.into(),
            value,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entries(&self) -> &[NamedTensor] {
        &self.entries
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Puts every parameter on `g` as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph) -> Binding {
        Binding(self.entries.iter().map(|e| g.param(e.value.clone())).collect())
    }

    /// Gradient per parameter in store order; unreached parameters get zeros.
    pub fn collect_grads(&self, grads: &Gradients, binding: &Binding) -> Vec<Tensor> {
        self.entries
            .iter()
            .zip(binding.vars())
            .map(|(e, v)| grads.get_or_zeros(*v, e.value.shape()))
            .collect()
    }

    /// Replaces values with those of `other`, matching by name and shape.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Contract(format!(
                "checkpoint has {} parameters, architecture expects {}",
                other.len(),
                self.len()
            )));
        }
        for e in &mut self.entries {
            let src = other
                .entries
                .iter()
                .find(|o| o.name == e.name)
                .ok_or_else(|| Error::Contract(format!("missing parameter `{}`", e.name)))?;
            if src.value.shape() != e.value.shape() {
                return Err(Error::Contract(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    e.name,
                    src.value.shape(),
                    e.value.shape()
                )));
            }
            e.value = src.value.clone();
        }
        Ok(())
    }

    /// Flattens all parameters into one vector (store order).
    pub fn flatten(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|e| e.value.data().iter().copied())
            .collect()
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_scalars(), "set_flat length");
        let mut offset = 0;
        for e in &mut self.entries {
            let n = e.value.len();
            e.value.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
    }
}
