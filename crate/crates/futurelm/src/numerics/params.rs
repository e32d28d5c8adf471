use crate::error::{Error, Result};
use crate::numerics::tape::{NodeId, Tape};
use crate::numerics::tensor::Tensor;

/// Ordered set of named parameter tensors. Order is the contract:
/// optimizer state, checkpoints, and tape leaves all align by index.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet {
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        self.entries.push((name.to_string(), tensor));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn at(&self, idx: usize) -> (&str, &Tensor) {
        let (n, t) = &self.entries[idx];
        (n.as_str(), t)
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.entries[idx].1
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Enter every parameter onto a tape as a leaf, in order.
    pub fn leaf_all(&self, tape: &mut Tape) -> Result<ParamMap> {
        let mut ids = Vec::with_capacity(self.entries.len());
        for (name, t) in &self.entries {
            let id = tape.leaf(t.clone()).map_err(|_| {
                Error::Numeric(format!("non-finite value in parameter {name}"))
            })?;
            ids.push((name.clone(), id));
        }
        Ok(ParamMap { ids })
    }
}

/// Parameter name to tape node id mapping for one forward build.
pub struct ParamMap {
    ids: Vec<(String, NodeId)>,
}

impl ParamMap {
    pub fn id(&self, name: &str) -> NodeId {
        self.ids
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn node_ids(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.ids.iter().map(|(n, id)| (n.as_str(), *id))
    }
}
