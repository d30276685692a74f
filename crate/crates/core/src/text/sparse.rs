use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse count vector over a feature vocabulary.
///
/// Entries are kept sorted by strictly increasing index and every stored
/// count is at least one, so two vectors with the same counts compare equal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u32, u32)>", into = "Vec<(u32, u32)>")]
pub struct SparseFeatureVector {
    entries: Vec<(u32, u32)>,
}

impl SparseFeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vector from `(index, count)` pairs, validating the ordering
    /// and positivity invariants.
    pub fn from_sorted(entries: Vec<(u32, u32)>) -> Result<Self> {
        for window in entries.windows(2) {
            if window[0].0 >= window[1].0 {
                return Err(Error::InvalidInput(format!(
                    "sparse indices must be strictly increasing, got {} then {}",
                    window[0].0, window[1].0
                )));
            }
        }
        if let Some(&(index, _)) = entries.iter().find(|(_, c)| *c == 0) {
            return Err(Error::InvalidInput(format!(
                "sparse count at index {index} must be positive"
            )));
        }
        Ok(Self { entries })
    }

    /// Counts occurrences of each index; order of the input does not matter.
    pub fn from_indices<I: IntoIterator<Item = u32>>(indices: I) -> Self {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for index in indices {
            *counts.entry(index).or_insert(0) += 1;
        }
        Self {
            entries: counts.into_iter().collect(),
        }
    }

    /// Dense helper, mostly for tests: `values[i]` becomes the count of index `i`.
    pub fn from_dense(values: &[u32]) -> Self {
        Self {
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0)
                .map(|(i, &v)| (i as u32, v))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: u32) -> u32 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0)
    }

    /// Dot product accumulated in increasing index order.
    pub fn dot(&self, other: &SparseFeatureVector) -> f64 {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        let mut acc = 0.0;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += f64::from(a[i].1) * f64::from(b[j].1);
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

impl TryFrom<Vec<(u32, u32)>> for SparseFeatureVector {
    type Error = Error;

    fn try_from(entries: Vec<(u32, u32)>) -> Result<Self> {
        Self::from_sorted(entries)
    }
}

impl From<SparseFeatureVector> for Vec<(u32, u32)> {
    fn from(v: SparseFeatureVector) -> Self {
        v.entries
    }
}
