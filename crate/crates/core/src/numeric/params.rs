use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NumericError, Tape, Tensor, Var};

/// Named tensors, ordered by name. Serializes as a JSON map
/// `name → {shape, values}` that round-trips bit-exactly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NumericError> {
        self.tensors
            .get(name)
            .ok_or_else(|| NumericError::UnknownParam {
                name: name.to_string(),
            })
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, NumericError> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| NumericError::UnknownParam {
                name: name.to_string(),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Entries whose name starts with `prefix`, with the prefix stripped.
    pub fn sub_store(&self, prefix: &str) -> ParamStore {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }

    /// Inserts every entry of `other` under `prefix`.
    pub fn merge_prefixed(&mut self, prefix: &str, other: ParamStore) {
        for (k, v) in other.tensors {
            self.tensors.insert(format!("{prefix}{k}"), v);
        }
    }

    pub fn to_json(&self) -> Result<String, NumericError> {
        serde_json::to_string(self).map_err(|e| NumericError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, NumericError> {
        let store: ParamStore =
            serde_json::from_str(text).map_err(|e| NumericError::Checkpoint(e.to_string()))?;
        for (name, t) in &store.tensors {
            if t.shape().iter().product::<usize>() != t.len() {
                return Err(NumericError::Checkpoint(format!(
                    "{name}: {} values for shape {:?}",
                    t.len(),
                    t.shape()
                )));
            }
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), NumericError> {
        std::fs::write(path, self.to_json()?).map_err(|e| NumericError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, NumericError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| NumericError::Checkpoint(e.to_string()))?;
        Self::from_json(&text)
    }
}

/// Lazily records store entries on a tape, as trainable leaves or as
/// constants, and collects their gradients by name after backward.
pub struct ParamBinder<'a> {
    store: &'a ParamStore,
    trainable: bool,
    vars: BTreeMap<String, Var>,
}

impl<'a> ParamBinder<'a> {
    pub fn new(store: &'a ParamStore, trainable: bool) -> Self {
        Self {
            store,
            trainable,
            vars: BTreeMap::new(),
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn get(&mut self, tape: &mut Tape, name: &str) -> Result<Var, NumericError> {
        if let Some(&v) = self.vars.get(name) {
            return Ok(v);
        }
        let t = self.store.get(name)?.clone();
        let v = if self.trainable {
            tape.param(t)
        } else {
            tape.constant(t)
        };
        self.vars.insert(name.to_string(), v);
        Ok(v)
    }

    /// Gradients of every bound entry; entries the loss does not reach get
    /// a zero gradient.
    pub fn grads(&self, tape: &Tape) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(name, &v)| {
                let g = tape
                    .grad(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(tape.shape(v)));
                (name.clone(), g)
            })
            .collect()
    }
}

/// Weight matrix drawn uniformly from `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng>(
    rng: &mut R,
    fan_in: usize,
    fan_out: usize,
    shape: &[usize],
) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let values = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), values).expect("shape product matches")
}
