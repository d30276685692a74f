//! Brown cluster paths files: `bitstring<TAB>word<TAB>count` per line.
//!
//! Cluster ids are assigned in order of first appearance of each distinct
//! bitstring, so the id of a path never depends on the words that follow it.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::preprocess::sha256_hex;
use crate::error::{Error, Result};

pub const MAX_CLUSTERS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct BrownClusterTable {
    /// Bitstring of each cluster id.
    paths: Vec<String>,
    /// Words in file order with their cluster id and count.
    words: Vec<(String, u32, u64)>,
    index: HashMap<String, u32>,
    digest: String,
}

impl BrownClusterTable {
    pub fn parse(contents: &str, source: &Path) -> Result<Self> {
        let mut paths: Vec<String> = Vec::new();
        let mut path_ids: HashMap<String, u32> = HashMap::new();
        let mut words = Vec::new();
        let mut index = HashMap::new();
        for (number, line) in contents.lines().enumerate() {
            let line_no = number + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: source.to_path_buf(),
                line: line_no,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(parse_err(format!("expected 3 tab-separated columns, found {}", fields.len())));
            }
            let (bits, word, count) = (fields[0], fields[1], fields[2]);
            if bits.is_empty() || !bits.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(parse_err(format!("cluster path {bits:?} is not a bitstring")));
            }
            if word.is_empty() {
                return Err(parse_err("empty word".into()));
            }
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("count {count:?} is not a non-negative integer")))?;
            let id = match path_ids.get(bits) {
                Some(&id) => id,
                None => {
                    if paths.len() == MAX_CLUSTERS {
                        return Err(parse_err(format!("more than {MAX_CLUSTERS} distinct clusters")));
                    }
                    let id = paths.len() as u32;
                    paths.push(bits.to_string());
                    path_ids.insert(bits.to_string(), id);
                    id
                }
            };
            if index.contains_key(word) {
                return Err(parse_err(format!("word {word:?} appears twice")));
            }
            index.insert(word.to_string(), id);
            words.push((word.to_string(), id, count));
        }
        Ok(Self {
            paths,
            words,
            index,
            digest: sha256_hex(contents.as_bytes()),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&contents, path)
    }

    pub fn cluster(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn cluster_count(&self) -> usize {
        self.paths.len()
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn path_of(&self, cluster: u32) -> Option<&str> {
        self.paths.get(cluster as usize).map(String::as_str)
    }

    /// SHA-256 of the file contents the table was parsed from.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// `(word, cluster id)` pairs in file order.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, u32)> {
        self.words.iter().map(|(w, id, _)| (w.as_str(), *id))
    }

    /// Writes the table back in the paths-file format.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (word, id, count) in &self.words {
            let _ = writeln!(out, "{}\t{}\t{}", self.paths[*id as usize], word, count);
        }
        out
    }
}
