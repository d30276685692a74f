use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::brown::BrownClusterTable;
use super::encode::{encode_bow, encode_brown, Vocabulary};
use super::preprocess::{preprocess, Resources};
use super::sparse::SparseFeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    #[default]
    Brown,
    Bow,
}

/// Text → sparse vector, for either representation.
///
/// In bag-of-words mode the vocabulary is grown by [`Featurizer::fit`] on
/// training text and frozen afterwards.
#[derive(Debug, Clone)]
pub struct Featurizer {
    resources: Arc<Resources>,
    kind: FeatureKind,
}

#[derive(Debug, Clone)]
enum FeatureKind {
    Brown(Arc<BrownClusterTable>),
    Bow(Vocabulary),
}

impl Featurizer {
    pub fn brown(resources: Arc<Resources>, table: Arc<BrownClusterTable>) -> Self {
        Self {
            resources,
            kind: FeatureKind::Brown(table),
        }
    }

    pub fn bow(resources: Arc<Resources>, vocabulary: Vocabulary) -> Self {
        Self {
            resources,
            kind: FeatureKind::Bow(vocabulary),
        }
    }

    pub fn mode(&self) -> FeatureMode {
        match self.kind {
            FeatureKind::Brown(_) => FeatureMode::Brown,
            FeatureKind::Bow(_) => FeatureMode::Bow,
        }
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        match &self.kind {
            FeatureKind::Bow(v) => Some(v),
            FeatureKind::Brown(_) => None,
        }
    }

    /// Grows the bag-of-words vocabulary over `texts`; a no-op for Brown features.
    pub fn fit<'a>(&mut self, texts: impl IntoIterator<Item = &'a str>) {
        if let FeatureKind::Bow(vocab) = &mut self.kind {
            for text in texts {
                let tokens = preprocess(text, &self.resources);
                encode_bow(&tokens, vocab, true);
            }
        }
    }

    pub fn encode(&self, text: &str) -> SparseFeatureVector {
        let tokens = preprocess(text, &self.resources);
        match &self.kind {
            FeatureKind::Brown(table) => encode_brown(&tokens, table),
            FeatureKind::Bow(vocab) => SparseFeatureVector::from_indices(tokens.iter().filter_map(|t| vocab.get(t))),
        }
    }
}
