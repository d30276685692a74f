use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::brown::BrownClusterTable;
use super::sparse::SparseFeatureVector;

/// Token → feature index table for bag-of-words encoding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn insert(&mut self, token: &str) -> u32 {
        if let Some(id) = self.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let mut vocab = Vocabulary::new();
        for t in &tokens {
            vocab.insert(t);
        }
        vocab
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Counts tokens by vocabulary index. With `grow`, unseen tokens get fresh
/// indices; otherwise they are dropped.
pub fn encode_bow<S: AsRef<str>>(tokens: &[S], vocab: &mut Vocabulary, grow: bool) -> SparseFeatureVector {
    let indices: Vec<u32> = tokens
        .iter()
        .filter_map(|t| {
            let t = t.as_ref();
            if grow {
                Some(vocab.insert(t))
            } else {
                vocab.get(t)
            }
        })
        .collect();
    SparseFeatureVector::from_indices(indices)
}

/// Counts tokens by Brown cluster id, dropping tokens without a cluster.
pub fn encode_brown<S: AsRef<str>>(tokens: &[S], table: &BrownClusterTable) -> SparseFeatureVector {
    SparseFeatureVector::from_indices(tokens.iter().filter_map(|t| table.cluster(t.as_ref())))
}
