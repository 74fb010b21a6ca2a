use std::collections::HashMap;
use std::sync::Arc;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Named parameter tensors in registration order, plus the causal masks
/// attached to masked kernels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: IndexMap<String, Tensor>,
    masks: HashMap<String, Arc<Tensor>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, shape: &[usize]) -> Result<()> {
        if self.tensors.contains_key(name) {
            return Err(Error::Config(format!("parameter {name} registered twice")));
        }
        self.tensors.insert(name.to_string(), Tensor::zeros(shape));
        Ok(())
    }

    pub fn attach_mask(&mut self, name: &str, mask: Arc<Tensor>) {
        self.masks.insert(name.to_string(), mask);
    }

    pub fn mask(&self, name: &str) -> Option<&Arc<Tensor>> {
        self.masks.get(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))
    }

    /// Replaces a tensor, keeping the registered shape.
    pub fn set(&mut self, name: &str, t: Tensor) -> Result<()> {
        let slot = self.get_mut(name)?;
        if slot.shape() != t.shape() {
            return Err(Error::Shape {
                op: "ParamStore::set",
                lhs: slot.shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
        *slot = t;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
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

    /// Records every parameter as an untracked constant, for inference.
    pub fn bind_frozen(&self, g: &mut Graph) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), g.constant(v.clone())))
                .collect(),
        }
    }

    /// Pairs parameter names, in registration order, with existing graph
    /// variables.
    pub fn bind_vars(&self, vars: &[Var]) -> Result<Bound> {
        if vars.len() != self.tensors.len() {
            return Err(Error::Config(format!(
                "{} variables for {} parameters",
                vars.len(),
                self.tensors.len()
            )));
        }
        Ok(Bound {
            vars: self.tensors.keys().cloned().zip(vars.iter().copied()).collect(),
        })
    }

    /// Records every parameter as a tracked leaf on `g`.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), g.param(v.clone())))
                .collect(),
        }
    }
}

/// Parameter name to graph variable for one forward pass.
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("unbound parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}
