//! JSON checkpoints: an architecture descriptor plus named parameter
//! arrays, with every float stored as a decimal string so that loading
//! reproduces the exact bits.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const FORMAT: &str = "fairvec-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<A> {
    pub format: String,
    pub kind: String,
    pub architecture: A,
    pub params: Vec<StoredTensor>,
}

pub fn store_params(params: &ParamStore) -> Vec<StoredTensor> {
    params
        .entries()
        .iter()
        .map(|e| StoredTensor {
            name: e.name.clone(),
            rows: e.value.rows(),
            cols: e.value.cols(),
            // Debug formatting is the shortest string that parses back to
            // the same f64.
            values: e.value.data().iter().map(|v| format!("{v:?}")).collect(),
        })
        .collect()
}

pub fn load_params(stored: &[StoredTensor]) -> Result<ParamStore> {
    let mut params = ParamStore::new();
    for t in stored {
        let data = t
            .values
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Contract(format!("parameter {}: bad float {s:?}", t.name)))
            })
            .collect::<Result<Vec<f64>>>()?;
        params.add(t.name.clone(), Tensor::new(t.rows, t.cols, data)?);
    }
    Ok(params)
}

impl<A: Serialize + DeserializeOwned> Checkpoint<A> {
    pub fn new(kind: &str, architecture: A, params: &ParamStore) -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            kind: kind.to_string(),
            architecture,
            params: store_params(params),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a checkpoint and checks its format tag and model kind.
    pub fn from_json(text: &str, kind: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        if c.format != FORMAT {
            return Err(Error::Contract(format!("unknown checkpoint format {:?}", c.format)));
        }
        if c.kind != kind {
            return Err(Error::Contract(format!(
                "checkpoint holds a {:?} model, expected {kind:?}",
                c.kind
            )));
        }
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, kind: &str) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, kind)
    }
}
