use ndarray::Array2;

use crate::error::{LeadError, Result};
use crate::Scalar;

/// Named 2-D tensors in a fixed order. Vectors are stored as `1 x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    names: Vec<String>,
    tensors: Vec<Array2<T>>,
}

impl<T: Scalar> Default for ParameterSet<T> {
    fn default() -> Self {
        ParameterSet {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Array2<T>) -> usize {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Array2<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Array2<T>] {
        &mut self.tensors
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Array2<T>> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<T>> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total scalar count.
    pub fn n_elements(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        ParameterSet {
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| t.mapv(|v| U::of(v.to_f64_lossy())))
                .collect(),
        }
    }

    /// Same names and shapes as `other`; returns a shape error naming the
    /// first difference.
    pub fn check_compatible<U>(&self, other: &ParameterSet<U>) -> Result<()> {
        if self.names != other.names {
            let missing = other
                .names
                .iter()
                .find(|n| !self.names.contains(n))
                .or_else(|| self.names.iter().find(|n| !other.names.contains(n)));
            return Err(LeadError::Shape(format!(
                "parameter names differ{}",
                missing.map(|m| format!(" (first mismatch: {m})")).unwrap_or_default()
            )));
        }
        for ((name, a), b) in self.names.iter().zip(&self.tensors).zip(&other.tensors) {
            if a.dim() != b.dim() {
                return Err(LeadError::Shape(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    b.dim(),
                    a.dim()
                )));
            }
        }
        Ok(())
    }

    /// Element-wise mean of snapshots sharing one layout.
    pub fn average(snapshots: &[&ParameterSet<T>]) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| LeadError::Config("cannot average an empty snapshot list".into()))?;
        let mut out = (*first).clone();
        for s in &snapshots[1..] {
            first.check_compatible(s)?;
            for (acc, t) in out.tensors.iter_mut().zip(&s.tensors) {
                *acc += t;
            }
        }
        let n = T::of(snapshots.len() as f64);
        for t in &mut out.tensors {
            t.mapv_inplace(|v| v / n);
        }
        Ok(out)
    }
}
