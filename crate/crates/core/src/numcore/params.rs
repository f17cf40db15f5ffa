use std::collections::HashMap;
use std::fmt;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Which side of the adversarial game a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    /// Tagger parameters, including the common encoder (minimize).
    Ner,
    /// Worker-discriminator-only parameters.
    Discriminator,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Ner => "ner",
            Group::Discriminator => "disc",
        }
    }

    pub fn parse(s: &str) -> Option<Group> {
        match s {
            "ner" => Some(Group::Ner),
            "disc" => Some(Group::Discriminator),
            _ => None,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub group: Group,
    pub value: Tensor,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: Group, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::validation(format!("duplicate parameter name {name}")));
        }
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter { name, group, value });
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Replaces every value from `other`, which must have the same layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::validation("parameter count mismatch"));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.value.shape() != src.value.shape() {
                return Err(Error::validation(format!(
                    "parameter layout mismatch at {}",
                    dst.name
                )));
            }
            dst.value = src.value.clone();
        }
        Ok(())
    }
}

/// Gradient buffers keyed by parameter, allocated on first write.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn new(store: &ParamStore) -> Self {
        Gradients {
            grads: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient as a dense tensor, zeros when nothing was accumulated.
    pub fn dense(&self, store: &ParamStore, id: ParamId) -> Tensor {
        match self.get(id) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = store.value(id).shape();
                Tensor::zeros(r, c)
            }
        }
    }

    pub(crate) fn slot(&mut self, id: ParamId, shape: (usize, usize)) -> &mut Tensor {
        if self.grads.len() <= id.0 {
            self.grads.resize(id.0 + 1, None);
        }
        self.grads[id.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, grad: &Tensor) {
        self.slot(id, grad.shape()).add_assign(grad);
    }

    pub fn merge(&mut self, other: &Gradients) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn zero(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn is_zero(&self, id: ParamId) -> bool {
        self.get(id)
            .is_none_or(|g| g.data().iter().all(|&x| x == 0.0))
    }

    pub fn max_abs(&self, id: ParamId) -> f64 {
        self.get(id)
            .map_or(0.0, |g| g.data().iter().fold(0.0, |m, x| m.max(x.abs())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut store = ParamStore::new();
        store.add("a", Group::Ner, Tensor::zeros(1, 1)).unwrap();
        assert!(store.add("a", Group::Discriminator, Tensor::zeros(1, 1)).is_err());
        assert_eq!(store.id("a"), Some(ParamId(0)));
    }

    #[test]
    fn gradients_accumulate_and_zero() {
        let mut store = ParamStore::new();
        let id = store.add("w", Group::Ner, Tensor::zeros(2, 1)).unwrap();
        let mut grads = Gradients::new(&store);
        assert!(grads.is_zero(id));
        let g = Tensor::column(&[1.0, 2.0]).unwrap();
        grads.accumulate(id, &g);
        grads.accumulate(id, &g);
        assert_eq!(grads.get(id).unwrap().data(), &[2.0, 4.0]);
        grads.zero();
        assert!(grads.get(id).is_none());
    }
}
