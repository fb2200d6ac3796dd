use std::collections::HashMap;

use crate::error::{NnError, Result};
use crate::real::Real;

/// Index of a parameter array inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }

    /// The id the `index`-th inserted parameter receives; lets a network be
    /// planned before its store exists.
    pub fn from_index(index: usize) -> Self {
        Self(index)
    }
}

/// Name and shape of a parameter, used to plan a network before allocating it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub dims: Vec<usize>,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, dims: &[usize]) -> Self {
        Self {
            name: name.into(),
            dims: dims.to_vec(),
        }
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Named, ordered collection of flat parameter arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    specs: Vec<ParamSpec>,
    values: Vec<Vec<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            specs: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, spec: ParamSpec, values: Vec<T>) -> Result<ParamId> {
        if self.index.contains_key(&spec.name) {
            return Err(NnError::DuplicateParam(spec.name));
        }
        if values.len() != spec.numel() {
            return Err(NnError::Shape {
                op: "ParamStore::insert",
                detail: format!(
                    "`{}` has {} values for dims {:?}",
                    spec.name,
                    values.len(),
                    spec.dims
                ),
            });
        }
        let id = self.specs.len();
        self.index.insert(spec.name.clone(), id);
        self.specs.push(spec);
        self.values.push(values);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.specs.len()).map(ParamId)
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.specs[id.0]
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.values[id.0]
    }

    pub fn values(&self) -> &[Vec<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.values
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.specs.iter().map(ParamSpec::numel).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            specs: self.specs.clone(),
            values: self.values.iter().map(|v| vec![T::zero(); v.len()]).collect(),
            index: self.index.clone(),
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            specs: self.specs.clone(),
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|x| U::lit(x.as_f64())).collect())
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Euclidean distance between two stores with identical layout.
    pub fn distance(&self, other: &Self) -> f64 {
        assert_eq!(self.specs, other.specs, "parameter layouts differ");
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| {
                let d = a.as_f64() - b.as_f64();
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}
