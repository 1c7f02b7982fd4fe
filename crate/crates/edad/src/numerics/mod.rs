//! Dense tensors, a reverse-mode gradient tape, Adam, and checkpoint I/O.

pub mod adam;
pub mod checkpoint;
pub mod fdcheck;
mod graph;
pub mod rng;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use graph::{Graph, Var};
pub use tensor::Tensor;

/// Scalar type of every tensor. 64-bit by default; build with
/// `--features f32` for single precision (checkpoints stay 64-bit).
#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;

use std::collections::BTreeMap;

use crate::Result;

/// Named collection of parameter tensors with deterministic (sorted)
/// iteration order. One store holds a whole model side (student, teacher).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    map: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_map(map: BTreeMap<String, Tensor>) -> Self {
        ParamStore { map }
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        self.map.insert(name.to_string(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.map.get_mut(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.map.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.map.iter_mut()
    }

    pub fn map(&self) -> &BTreeMap<String, Tensor> {
        &self.map
    }

    pub fn into_map(self) -> BTreeMap<String, Tensor> {
        self.map
    }

    /// Sub-store of entries under `prefix.`, with the prefix stripped.
    pub fn sub(&self, prefix: &str) -> ParamStore {
        let dot = format!("{prefix}.");
        let map = self
            .map
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&dot).map(|rest| (rest.to_string(), v.clone())))
            .collect();
        ParamStore { map }
    }

    /// Register every tensor on a graph under its name, returning handles.
    pub fn register(&self, g: &mut Graph) -> BTreeMap<String, Var> {
        self.map
            .iter()
            .map(|(name, t)| (name.clone(), g.param(name, t)))
            .collect()
    }

    /// Register every tensor as an untracked constant (no gradients).
    pub fn register_constant(&self, g: &mut Graph) -> BTreeMap<String, Var> {
        self.map
            .iter()
            .map(|(name, t)| (name.clone(), g.constant(t)))
            .collect()
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        for (name, t) in &self.map {
            t.ensure_finite(&format!("{context}: {name}"))?;
        }
        Ok(())
    }

    /// In-place exponential moving average toward `other`:
    /// `self = decay * self + (1 - decay) * other`, per element.
    pub fn ema_from(&mut self, other: &ParamStore, decay: Real) {
        for (name, t) in self.map.iter_mut() {
            let src = other
                .map
                .get(name)
                .unwrap_or_else(|| panic!("ema_from: missing '{name}' in source store"));
            for (d, s) in t.data_mut().iter_mut().zip(src.data()) {
                *d = decay * *d + (1.0 - decay) * *s;
            }
        }
    }
}
