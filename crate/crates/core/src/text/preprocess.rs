//! Tweet normalisation: the ordered rule chain applied before encoding.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::porter;
use crate::error::{Error, Result};

/// Punctuation that survives stripping, emitted as standalone tokens.
const KEPT_PUNCTUATION: [char; 3] = ['.', '!', '?'];

pub const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");
pub const BUNDLED_EMOTICONS: &str = include_str!("../../data/emoticons.tsv");

/// Stopword list, emoticon table and switches for the optional rules.
#[derive(Debug, Clone)]
pub struct Resources {
    stopwords: HashSet<String>,
    emoticons: HashMap<String, String>,
    pub remove_urls: bool,
    pub stem: bool,
    stopword_digest: String,
    emoticon_digest: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl Resources {
    /// Builds resources from file contents: one stopword per line, and
    /// `emoticon<TAB>replacement` lines. Emoticon keys are lowercased because
    /// lookup happens after lowercasing; the first entry for a key wins.
    pub fn from_strs(stopwords: &str, emoticons: &str) -> Result<Self> {
        let stopword_set = stopwords
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        let mut table = HashMap::new();
        for (number, line) in emoticons.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with("##") {
                continue;
            }
            let Some((emoticon, word)) = line.split_once('\t') else {
                return Err(Error::Parse {
                    path: "<emoticons>".into(),
                    line: number + 1,
                    message: "expected emoticon<TAB>replacement".into(),
                });
            };
            let (emoticon, word) = (emoticon.trim(), word.trim());
            if emoticon.is_empty() || word.is_empty() {
                return Err(Error::Parse {
                    path: "<emoticons>".into(),
                    line: number + 1,
                    message: "empty emoticon or replacement".into(),
                });
            }
            table.entry(emoticon.to_lowercase()).or_insert_with(|| word.to_lowercase());
        }
        Ok(Self {
            stopwords: stopword_set,
            emoticons: table,
            remove_urls: true,
            stem: true,
            stopword_digest: sha256_hex(stopwords.as_bytes()),
            emoticon_digest: sha256_hex(emoticons.as_bytes()),
        })
    }

    pub fn from_files(stopwords: &Path, emoticons: &Path) -> Result<Self> {
        let resources = Self::from_strs(&read(stopwords)?, &read(emoticons)?);
        resources.map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: emoticons.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    /// The stopword list and emoticon table shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_strs(BUNDLED_STOPWORDS, BUNDLED_EMOTICONS).expect("bundled resources parse")
    }

    pub fn stopword_digest(&self) -> &str {
        &self.stopword_digest
    }

    pub fn emoticon_digest(&self) -> &str {
        &self.emoticon_digest
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    pub fn emoticon(&self, token: &str) -> Option<&str> {
        self.emoticons.get(token).map(String::as_str)
    }
}

fn is_url(token: &str) -> bool {
    token.starts_with("http://") || token.starts_with("https://") || token.starts_with("www.")
}

/// Splits a token into word pieces and runs of kept punctuation; all other
/// non-alphanumeric characters are dropped.
fn detach_punctuation(token: &str, out: &mut Vec<String>) {
    let mut word = String::new();
    let mut punct = String::new();
    for c in token.chars() {
        if c.is_alphanumeric() {
            if !punct.is_empty() {
                out.push(std::mem::take(&mut punct));
            }
            word.push(c);
        } else if KEPT_PUNCTUATION.contains(&c) {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            punct.push(c);
        } else {
            // removed characters still separate kept punctuation runs from words
            if !punct.is_empty() {
                out.push(std::mem::take(&mut punct));
            }
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    if !punct.is_empty() {
        out.push(punct);
    }
}

/// Replaces every run of three or more identical characters with two.
pub fn squash_repeats(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    let mut prev = None;
    let mut run = 0;
    for c in token.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        if run <= 2 {
            out.push(c);
        }
    }
    out
}

/// Squash then stem, repeated until the token stops changing.
fn normalise(token: &str, stem: bool) -> String {
    let mut current = squash_repeats(token);
    if !stem {
        return current;
    }
    loop {
        let next = squash_repeats(&porter::stem(&current));
        if next == current {
            return current;
        }
        current = next;
    }
}

/// Lowercase, whitespace tokenisation, emoticon replacement, username and URL
/// removal, punctuation stripping (keeping `.`, `!`, `?`), stopword removal,
/// repeat squashing and stemming, in that order.
pub fn preprocess(text: &str, resources: &Resources) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut pieces = Vec::new();
    for raw in lowered.split_whitespace() {
        if let Some(word) = resources.emoticon(raw) {
            pieces.extend(word.split_whitespace().map(str::to_string));
            continue;
        }
        if raw.starts_with('@') {
            continue;
        }
        if resources.remove_urls && is_url(raw) {
            continue;
        }
        detach_punctuation(raw, &mut pieces);
    }
    pieces
        .into_iter()
        .filter(|t| !resources.is_stopword(t))
        .map(|t| normalise(&t, resources.stem))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Serialisable record of which resources a pipeline used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceDigests {
    pub stopwords_sha256: String,
    pub emoticons_sha256: String,
}

impl Resources {
    pub fn digests(&self) -> ResourceDigests {
        ResourceDigests {
            stopwords_sha256: self.stopword_digest.clone(),
            emoticons_sha256: self.emoticon_digest.clone(),
        }
    }
}
