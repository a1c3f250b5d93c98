//! Named, ordered collections of trainable tensors.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Frozen parameters enter the tape as constants.
    pub trainable: bool,
}

/// Parameters in insertion order, addressable by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    entries: Vec<Param<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(Param {
            name,
            value,
            trainable: true,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("no parameter named {name}")))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.entries[self.position(name)?].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        let i = self.position(name)?;
        Ok(&mut self.entries[i].value)
    }

    /// Replaces a value, keeping the name and shape.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let slot = self.get_mut(name)?;
        if slot.shape() != value.shape() {
            return Err(Error::dim("set parameter", slot.shape(), value.shape()));
        }
        *slot = value;
        Ok(())
    }

    /// Sets the trainable flag on every parameter whose name starts with `prefix`.
    pub fn set_trainable(&mut self, prefix: &str, trainable: bool) -> usize {
        let mut n = 0;
        for p in self.entries.iter_mut().filter(|p| p.name.starts_with(prefix)) {
            p.trainable = trainable;
            n += 1;
        }
        n
    }

    /// Copies every parameter of `other` in under `prefix`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &ParamSet<T>) -> Result<()> {
        for p in other.iter() {
            self.insert(format!("{prefix}{}", p.name), p.value.clone())?;
            let last = self.entries.len() - 1;
            self.entries[last].trainable = p.trainable;
        }
        Ok(())
    }

    /// Parameters under `prefix`, with the prefix stripped.
    pub fn extract_prefixed(&self, prefix: &str) -> Result<ParamSet<T>> {
        let mut out = ParamSet::new();
        for p in self.entries.iter().filter(|p| p.name.starts_with(prefix)) {
            out.insert(&p.name[prefix.len()..], p.value.clone())?;
        }
        Ok(out)
    }

    /// Same names, in the same order, with the same shapes.
    pub fn check_layout(&self, other: &ParamSet<T>) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Contract(format!(
                "parameter count {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a.name != b.name {
                return Err(Error::Contract(format!("parameter {} vs {}", a.name, b.name)));
            }
            a.value.check_same(&b.value, "parameter layout")?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|p| p.value.is_finite())
    }

    /// Records every parameter as a tape leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound<'_, T> {
        let vars = self
            .entries
            .iter()
            .map(|p| tape.leaf(p.value.clone(), p.trainable))
            .collect();
        Bound { set: self, vars }
    }

    /// Pairs existing tape handles with this set's names, in entry order.
    pub fn bound_from(&self, vars: Vec<Var>) -> Result<Bound<'_, T>> {
        if vars.len() != self.len() {
            return Err(Error::Contract(format!("{} handles for {} parameters", vars.len(), self.len())));
        }
        Ok(Bound { set: self, vars })
    }
}

/// Tape handles for a [`ParamSet`], aligned with its entries.
#[derive(Debug)]
pub struct Bound<'a, T> {
    set: &'a ParamSet<T>,
    vars: Vec<Var>,
}

impl<T: Scalar> Bound<'_, T> {
    pub fn var(&self, name: &str) -> Result<Var> {
        Ok(self.vars[self.set.position(name)?])
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Gradients in parameter order; `None` for frozen parameters.
    pub fn grads(&self, tape: &Tape<T>) -> Vec<Option<Tensor<T>>> {
        self.vars
            .iter()
            .map(|&v| tape.requires_grad(v).then(|| tape.grad(v)))
            .collect()
    }
}

/// Glorot-uniform matrix: entries uniform in `±√(6/(fan_in+fan_out))`.
pub fn glorot_uniform<T: Scalar>(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor<T> {
    let bound = glorot_bound(fan_in, fan_out);
    let data = (0..fan_in * fan_out)
        .map(|_| T::of(rng.random_range(-bound..=bound)))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("positive fan sizes")
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
