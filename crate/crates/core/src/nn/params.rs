use std::collections::BTreeMap;
use std::ops::Index;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Element, Gradients, Graph, Tensor, Var};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

/// Named, ordered parameter tensors of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    index: BTreeMap<String, usize>,
}

impl<T> Default for ParamStore<T> {
    fn default() -> Self {
        Self { names: Vec::new(), values: Vec::new(), index: BTreeMap::new() }
    }
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        self.index.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    /// Every tensor, mutably, in insertion order.
    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.values.iter_mut()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.names.iter().zip(&self.values).enumerate().map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Overwrite a tensor, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let slot = &mut self.values[id.0];
        if slot.shape() != value.shape() {
            return Err(Error::Checkpoint {
                tensor: self.names[id.0].clone(),
                detail: format!("expected shape {:?}, got {:?}", slot.shape(), value.shape()),
            });
        }
        *slot = value;
        Ok(())
    }

    /// Fill every tensor whose name satisfies `pred` with `value`.
    pub fn fill_where(&mut self, pred: impl Fn(&str) -> bool, value: T) -> usize {
        let mut hits = 0;
        for (name, t) in self.names.iter().zip(&mut self.values) {
            if pred(name) {
                t.data_mut().fill(value);
                hits += 1;
            }
        }
        hits
    }

    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Register every tensor as a gradient-receiving leaf of `graph`.
    pub fn bind<'g>(&self, graph: &'g Graph<T>) -> Bound<'g, T> {
        Bound { vars: self.values.iter().map(|t| graph.param(t.clone())).collect() }
    }
}

/// Parameters of a [`ParamStore`] as leaves of one graph.
pub struct Bound<'g, T: Element> {
    vars: Vec<Var<'g, T>>,
}

impl<'g, T: Element> Bound<'g, T> {
    pub fn var(&self, id: ParamId) -> Var<'g, T> {
        self.vars[id.0]
    }

    /// Per-parameter gradients in store order.
    pub fn grads(&self, grads: &Gradients<T>) -> Vec<Tensor<T>> {
        self.vars.iter().map(|&v| grads.get(v)).collect()
    }
}

impl<'g, T: Element> Index<ParamId> for Bound<'g, T> {
    type Output = Var<'g, T>;

    fn index(&self, id: ParamId) -> &Self::Output {
        &self.vars[id.0]
    }
}

/// Initial value recipe for a new parameter.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    /// Normal with the given std, resampled outside ±2 std.
    TruncNormal(f64),
    Normal(f64),
    /// He normal: std `sqrt(2 / fan_in)`.
    He { fan_in: usize },
}

/// 64-bit FNV-1a, used to derive stable per-parameter seeds.
pub(crate) fn fnv1a(seed: u64, text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Creates parameters under a dotted name prefix. Each tensor's initial
/// value depends only on (seed, full name), so two models that share a
/// parameter name share its initial value.
pub struct ParamBuilder<'a, T> {
    store: &'a mut ParamStore<T>,
    prefix: String,
    seed: u64,
}

impl<'a, T: Element> ParamBuilder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, seed: u64) -> Self {
        Self { store, prefix: String::new(), seed }
    }

    pub fn child(&mut self, name: impl std::fmt::Display) -> ParamBuilder<'_, T> {
        let prefix = if self.prefix.is_empty() { name.to_string() } else { format!("{}.{name}", self.prefix) };
        ParamBuilder { store: self.store, prefix, seed: self.seed }
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        let full = if self.prefix.is_empty() { name.to_string() } else { format!("{}.{name}", self.prefix) };
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(self.seed, &full));
        let value = sample(shape, init, &mut rng);
        self.store.insert(full, value)
    }
}

fn sample<T: Element>(shape: &[usize], init: Init, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let normal = |std: f64, rng: &mut ChaCha8Rng, truncate: bool| -> f64 {
        let d = Normal::new(0.0, std).expect("positive std");
        loop {
            let v = d.sample(rng);
            if !truncate || v.abs() <= 2.0 * std {
                return v;
            }
        }
    };
    match init {
        Init::Zeros => Tensor::zeros(shape.to_vec()),
        Init::Ones => Tensor::ones(shape.to_vec()),
        Init::TruncNormal(std) => Tensor::from_fn(shape.to_vec(), |_| T::from_f64_lossy(normal(std, rng, true))),
        Init::Normal(std) => Tensor::from_fn(shape.to_vec(), |_| T::from_f64_lossy(normal(std, rng, false))),
        Init::He { fan_in } => {
            let std = (2.0 / fan_in as f64).sqrt();
            Tensor::from_fn(shape.to_vec(), |_| T::from_f64_lossy(normal(std, rng, false)))
        }
    }
}
