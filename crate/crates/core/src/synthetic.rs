//! Seeded generator for a small separable stance corpus.
//!
//! Every tweet carries one stance word whose Brown cluster belongs to its
//! class, mixed with rumour topic words, shared filler, usernames,
//! emoticons and links. Class mixes differ per rumour with supporting the
//! most common overall. A few tweets per rumour are retweets.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::multiclass::StanceLabel;
use crate::text::{preprocess, LabeledInstance, Resources};

const STANCE_WORDS: [(&str, &[&str]); 6] = [
    ("0000", &["true", "real", "genuine"]),
    ("0001", &["confirmed", "verified", "witnessed"]),
    ("0100", &["fake", "hoax", "false"]),
    ("0101", &["debunked", "nonsense", "rubbish"]),
    ("1000", &["really", "sure", "source"]),
    ("1001", &["proof", "evidence", "?"]),
];
const FILLER_CLUSTERS: [&str; 4] = ["1100", "1101", "1110", "1111"];
const FILLER: [&str; 8] = ["people", "news", "tonight", "street", "police", "photos", "everyone", "town"];

/// `(rumour id, event id, topic words, class weights)`.
const RUMOURS: [(&str, &str, [&str; 3], [f64; 3]); 7] = [
    ("london-eye", "london", ["eye", "wheel", "fire"], [0.6, 0.25, 0.15]),
    ("army-bank", "london", ["army", "bank", "soldiers"], [0.5, 0.3, 0.2]),
    ("zoo-animals", "london", ["zoo", "tiger", "loose"], [0.55, 0.3, 0.15]),
    ("children-hospital", "birmingham", ["hospital", "children", "attack"], [0.45, 0.35, 0.2]),
    ("fast-food", "birmingham", ["burger", "restaurant", "kitchen"], [0.65, 0.2, 0.15]),
    ("shop-fire", "manchester", ["shop", "store", "burning"], [0.5, 0.2, 0.3]),
    ("police-girl", "manchester", ["girl", "officers", "beaten"], [0.4, 0.4, 0.2]),
];
const EMOTICONS: [&str; 4] = [":)", ":(", ":/", ":o"];

/// Seed of the corpus under `data/synthetic`.
pub const BUNDLED_SEED: u64 = 2016;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub instances: Vec<LabeledInstance>,
    /// Brown paths file covering every generated word, keyed by its
    /// preprocessed form.
    pub brown_paths: String,
}

fn stance_cluster(label: StanceLabel, rng: &mut ChaCha8Rng) -> usize {
    2 * label.index() + rng.gen_range(0..2)
}

fn pick_label(weights: &[f64; 3], rng: &mut ChaCha8Rng) -> StanceLabel {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return StanceLabel::ALL[i];
        }
    }
    StanceLabel::Questioning
}

pub fn generate(seed: u64) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::new();
    let mut word_counts: BTreeMap<String, u64> = BTreeMap::new();
    for (r, (rumour, event, topics, weights)) in RUMOURS.iter().enumerate() {
        let size = rng.gen_range(56..=64);
        for position in 0..size {
            let label = pick_label(weights, &mut rng);
            let words = STANCE_WORDS[stance_cluster(label, &mut rng)].1;
            let stance_word = *words.choose(&mut rng).expect("non-empty");
            let mut tokens: Vec<String> = vec![stance_word.to_string()];
            tokens.push(topics.choose(&mut rng).expect("topics").to_string());
            for _ in 0..rng.gen_range(0..3) {
                tokens.push(FILLER.choose(&mut rng).expect("filler").to_string());
            }
            tokens.shuffle(&mut rng);
            if label == StanceLabel::Questioning && stance_word != "?" && rng.gen_bool(0.5) {
                tokens.push("??".into());
            }
            for t in &tokens {
                *word_counts.entry(t.clone()).or_default() += 1;
            }
            // decoration that preprocessing removes or maps to unclustered words
            if rng.gen_bool(0.3) {
                tokens.insert(0, format!("@user{}", rng.gen_range(1..500)));
            }
            if rng.gen_bool(0.15) {
                tokens.push(format!("http://t.co/{:06x}", rng.gen_range(0..0xffffff)));
            }
            if rng.gen_bool(0.15) {
                tokens.push(EMOTICONS.choose(&mut rng).expect("emoticons").to_string());
            }
            let is_retweet = position >= 5 && rng.gen_bool(0.06);
            let mut text = tokens.join(" ");
            if is_retweet {
                text = format!("RT @user{}: {text}", rng.gen_range(1..500));
            }
            instances.push(LabeledInstance {
                tweet_id: format!("r{}-{position:03}", r + 1),
                text,
                rumour_id: rumour.to_string(),
                event_id: event.to_string(),
                order_index: position,
                label: Some(label),
                is_retweet,
            });
        }
    }

    let resources = Resources::bundled();
    let mut clusters: Vec<(String, String)> = Vec::new();
    for (bits, words) in STANCE_WORDS {
        for w in words {
            clusters.push((bits.to_string(), w.to_string()));
        }
    }
    clusters.push((STANCE_WORDS[5].0.to_string(), "??".into()));
    let topic_words = RUMOURS.iter().flat_map(|r| r.2);
    for (i, w) in FILLER.iter().copied().chain(topic_words).enumerate() {
        clusters.push((FILLER_CLUSTERS[i % FILLER_CLUSTERS.len()].to_string(), w.to_string()));
    }
    let mut brown_paths = String::new();
    let mut written = std::collections::BTreeSet::new();
    for (bits, word) in clusters {
        let Some(key) = preprocess(&word, &resources).into_iter().next() else {
            continue;
        };
        if written.insert(key.clone()) {
            let count = word_counts.get(&word).copied().unwrap_or(1);
            let _ = writeln!(brown_paths, "{bits}\t{key}\t{count}");
        }
    }
    SyntheticCorpus { instances, brown_paths }
}

impl SyntheticCorpus {
    /// Canonical JSONL, one instance per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for inst in &self.instances {
            out.push_str(&serde_json::to_string(&crate::corpus::JsonRecord::from(inst)).expect("serializable"));
            out.push('\n');
        }
        out
    }
}
