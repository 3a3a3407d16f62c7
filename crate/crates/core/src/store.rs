use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Ordered, uniquely named collection of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<(String, Tensor<T>)>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::IncompatibleStores(format!("duplicate parameter name {name}")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Same names in the same order with the same dims.
    pub fn check_compatible(&self, other: &ParamStore<T>) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::IncompatibleStores(format!(
                "{} vs {} parameters",
                self.len(),
                other.len()
            )));
        }
        for ((na, ta), (nb, tb)) in self.entries.iter().zip(&other.entries) {
            if na != nb {
                return Err(Error::IncompatibleStores(format!("{na} vs {nb}")));
            }
            if ta.dims() != tb.dims() {
                return Err(Error::IncompatibleStores(format!(
                    "{na}: dims {} vs {}",
                    ta.dims(),
                    tb.dims()
                )));
            }
        }
        Ok(())
    }

    pub fn bit_eq(&self, other: &ParamStore<T>) -> bool {
        self.len() == other.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((na, ta), (nb, tb))| na == nb && ta.bit_eq(tb))
    }

    /// SHA-256 over names, dims and the exact bit patterns of every value.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in &self.entries {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            for d in t.dims().as_array() {
                h.update((d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.as_f64().to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast()))
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Keep only entries whose name satisfies `keep`.
    pub fn filtered(&self, keep: impl Fn(&str) -> bool) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (n, t) in &self.entries {
            if keep(n) {
                out.insert(n.clone(), t.clone()).expect("names already unique");
            }
        }
        out
    }
}
