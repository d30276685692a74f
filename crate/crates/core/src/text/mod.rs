//! Tweet preprocessing and sparse feature encoding.

mod brown;
mod encode;
mod features;
mod instance;
mod porter;
mod preprocess;
mod sparse;

pub use brown::{BrownClusterTable, MAX_CLUSTERS};
pub use encode::{encode_bow, encode_brown, Vocabulary};
pub use features::{FeatureMode, Featurizer};
pub use instance::{filter_retweets, LabeledInstance};
pub use porter::stem;
pub use preprocess::{preprocess, sha256_hex, BUNDLED_EMOTICONS, BUNDLED_STOPWORDS, squash_repeats, ResourceDigests, Resources};
pub use sparse::SparseFeatureVector;
