use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numkit::normalize;

/// Named unit vectors of one dimension, in a fixed order.
///
/// Rows are re-normalized in `f64` on construction. Lookups by name go
/// through a hash index; iteration follows insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    names: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            names: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Builds a table from `(name, vector)` pairs, normalizing each vector.
    pub fn from_rows<S, V>(dim: usize, rows: impl IntoIterator<Item = (S, V)>) -> Result<Self>
    where
        S: Into<String>,
        V: AsRef<[f64]>,
    {
        let mut table = EmbeddingTable::new(dim);
        for (name, v) in rows {
            table.push(name, v.as_ref())?;
        }
        Ok(table)
    }

    pub fn push(&mut self, name: impl Into<String>, v: &[f64]) -> Result<()> {
        let name = name.into();
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateName(name));
        }
        let unit = normalize(v)?;
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.data.extend_from_slice(&unit);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.index_of(name).map(|i| self.row(i))
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data
            .chunks_exact(self.dim.max(1))
            .take(self.names.len())
    }

    /// Dot product of `x` with every row.
    pub fn similarities(&self, x: &[f64]) -> Vec<f64> {
        self.rows().map(|r| crate::numkit::dot(x, r)).collect()
    }

    /// A new table holding only the named rows, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let mut out = EmbeddingTable::new(self.dim);
        for n in names {
            let row = self.get(n).ok_or_else(|| Error::UnknownId {
                kind: "embedding",
                id: n.to_string(),
            })?;
            out.push(*n, row)?;
        }
        Ok(out)
    }
}
