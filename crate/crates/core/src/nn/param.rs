use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Which optimizer group owns a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    Rae,
    Retrofit,
    Frozen,
}

impl Group {
    pub fn tag(self) -> u8 {
        match self {
            Group::Rae => 0,
            Group::Retrofit => 1,
            Group::Frozen => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Group::Rae),
            1 => Some(Group::Retrofit),
            2 => Some(Group::Frozen),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Rae => "RAE",
            Group::Retrofit => "RETROFIT",
            Group::Frozen => "FROZEN",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    id: String,
    group: Group,
    pub tensor: Tensor,
}

impl Parameter {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn group(&self) -> Group {
        self.group
    }
}

/// Owns every learnable (and frozen) tensor of a model, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, id: impl Into<String>, group: Group, tensor: Tensor) -> Result<ParamId> {
        let id = id.into();
        if self.by_name.contains_key(&id) {
            return Err(Error::Internal(format!("duplicate parameter id `{id}`")));
        }
        let pid = ParamId(self.params.len());
        self.by_name.insert(id.clone(), pid);
        self.params.push(Parameter { id, group, tensor });
        Ok(pid)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, pid: ParamId) -> &Parameter {
        &self.params[pid.0]
    }

    pub fn tensor(&self, pid: ParamId) -> &Tensor {
        &self.params[pid.0].tensor
    }

    pub fn tensor_mut(&mut self, pid: ParamId) -> &mut Tensor {
        &mut self.params[pid.0].tensor
    }

    pub fn lookup(&self, id: &str) -> Option<ParamId> {
        self.by_name.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids_in(&self, group: Group) -> Vec<ParamId> {
        self.iter().filter(|(_, p)| p.group == group).map(|(i, _)| i).collect()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Concatenated little-endian bytes of every parameter in `group`.
    pub fn group_bytes(&self, group: Group) -> Vec<u8> {
        self.params
            .iter()
            .filter(|p| p.group == group)
            .flat_map(|p| p.tensor.to_le_bytes())
            .collect()
    }
}
