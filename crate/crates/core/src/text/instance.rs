use serde::{Deserialize, Serialize};

use crate::multiclass::StanceLabel;

/// One tweet of a rumour conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub tweet_id: String,
    pub text: String,
    pub rumour_id: String,
    pub event_id: String,
    /// Position within the rumour's temporal ordering; unique per rumour.
    pub order_index: usize,
    pub label: Option<StanceLabel>,
    pub is_retweet: bool,
}

impl LabeledInstance {
    /// Flagged as a retweet, or written in the manual `RT @user` form.
    pub fn looks_like_retweet(&self) -> bool {
        self.is_retweet || self.text.trim_start().starts_with("RT @")
    }
}

/// Drops retweets from training data; test data passes through untouched.
pub fn filter_retweets(instances: Vec<LabeledInstance>, training: bool) -> Vec<LabeledInstance> {
    if !training {
        return instances;
    }
    instances.into_iter().filter(|i| !i.looks_like_retweet()).collect()
}
