//! Corpus files: JSONL (canonical) and CSV with configurable field names.
//!
//! Within each rumour, `order_index` is the rank of the order field (numbers
//! compare numerically, anything else as text), ties broken by tweet id.
//! Without an order field, file order is used.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::multiclass::StanceLabel;
use crate::text::LabeledInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

/// Source field (JSON key or CSV header) for each instance attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMapping {
    pub tweet_id: String,
    pub text: String,
    pub rumour_id: String,
    /// Falls back to the rumour id when absent.
    pub event_id: String,
    pub label: String,
    /// Timestamp or position; optional.
    pub order: String,
    pub retweet: String,
}

impl Default for FieldMapping {
    fn default() -> Self {
        Self {
            tweet_id: "tweet_id".into(),
            text: "text".into(),
            rumour_id: "rumour_id".into(),
            event_id: "event_id".into(),
            label: "label".into(),
            order: "order".into(),
            retweet: "is_retweet".into(),
        }
    }
}

/// Serialised form of one instance under the default mapping.
#[derive(Debug, Clone, Serialize)]
pub struct JsonRecord<'a> {
    pub tweet_id: &'a str,
    pub text: &'a str,
    pub rumour_id: &'a str,
    pub event_id: &'a str,
    pub order: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<StanceLabel>,
    pub is_retweet: bool,
}

impl<'a> From<&'a LabeledInstance> for JsonRecord<'a> {
    fn from(i: &'a LabeledInstance) -> Self {
        Self {
            tweet_id: &i.tweet_id,
            text: &i.text,
            rumour_id: &i.rumour_id,
            event_id: &i.event_id,
            order: i.order_index,
            label: i.label,
            is_retweet: i.is_retweet,
        }
    }
}

#[derive(Debug, Clone)]
enum OrderKey {
    Number(f64),
    Text(String),
    Line(usize),
}

impl OrderKey {
    fn rank(&self) -> (u8, f64, &str, usize) {
        match self {
            OrderKey::Number(x) => (0, *x, "", 0),
            OrderKey::Text(s) => (1, 0.0, s.as_str(), 0),
            OrderKey::Line(l) => (2, 0.0, "", *l),
        }
    }
}

/// One parsed row before order indices are assigned.
struct Row {
    instance: LabeledInstance,
    order: OrderKey,
}

#[derive(Debug, Default)]
pub struct LoadedCorpus {
    pub instances: Vec<LabeledInstance>,
    /// Rows skipped in lenient mode.
    pub errors: Vec<Error>,
}

pub fn parse_label(raw: &str) -> Result<Option<StanceLabel>> {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("null") || t.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    t.parse().map(Some)
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "" | "0" | "false" | "no" | "f" | "n" => Some(false),
        "1" | "true" | "yes" | "t" | "y" => Some(true),
        _ => None,
    }
}

/// Field accessor shared by both formats.
trait Record {
    fn field(&self, name: &str) -> Option<FieldValue>;
}

enum FieldValue {
    Text(String),
    Number(f64),
    Bool(bool),
}

impl FieldValue {
    fn as_text(&self) -> String {
        match self {
            FieldValue::Text(s) => s.clone(),
            FieldValue::Number(x) if x.fract() == 0.0 && x.abs() < 1e15 => format!("{}", *x as i64),
            FieldValue::Number(x) => x.to_string(),
            FieldValue::Bool(b) => b.to_string(),
        }
    }
}

impl Record for serde_json::Map<String, Value> {
    fn field(&self, name: &str) -> Option<FieldValue> {
        match self.get(name)? {
            Value::Null => None,
            Value::String(s) => Some(FieldValue::Text(s.clone())),
            Value::Number(n) => n.as_f64().map(FieldValue::Number),
            Value::Bool(b) => Some(FieldValue::Bool(*b)),
            other => Some(FieldValue::Text(other.to_string())),
        }
    }
}

struct CsvRow<'a> {
    headers: &'a csv::StringRecord,
    record: csv::StringRecord,
}

impl Record for CsvRow<'_> {
    fn field(&self, name: &str) -> Option<FieldValue> {
        let idx = self.headers.iter().position(|h| h == name)?;
        let value = self.record.get(idx)?;
        if value.is_empty() {
            return None;
        }
        Some(FieldValue::Text(value.to_string()))
    }
}

fn build_row(record: &dyn Record, mapping: &FieldMapping, line: usize) -> std::result::Result<Row, String> {
    let required = |name: &str| -> std::result::Result<String, String> {
        let v = record.field(name).map(|v| v.as_text()).unwrap_or_default();
        if v.trim().is_empty() {
            Err(format!("missing field {name:?}"))
        } else {
            Ok(v)
        }
    };
    let tweet_id = required(&mapping.tweet_id)?;
    let rumour_id = required(&mapping.rumour_id)?;
    let text = record.field(&mapping.text).map(|v| v.as_text()).ok_or_else(|| format!("missing field {:?}", mapping.text))?;
    let event_id = record
        .field(&mapping.event_id)
        .map(|v| v.as_text())
        .filter(|s| !s.trim().is_empty())
        .unwrap_or_else(|| rumour_id.clone());
    let label = match record.field(&mapping.label) {
        None => None,
        Some(v) => parse_label(&v.as_text()).map_err(|e| e.to_string())?,
    };
    let is_retweet = match record.field(&mapping.retweet) {
        None => false,
        Some(FieldValue::Bool(b)) => b,
        Some(FieldValue::Number(x)) => x != 0.0,
        Some(FieldValue::Text(s)) => parse_bool(&s).ok_or_else(|| format!("retweet flag {s:?} is not a boolean"))?,
    };
    let order = match record.field(&mapping.order) {
        None => OrderKey::Line(line),
        Some(FieldValue::Number(x)) => OrderKey::Number(x),
        Some(v) => {
            let s = v.as_text();
            match s.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => OrderKey::Number(x),
                _ => OrderKey::Text(s),
            }
        }
    };
    Ok(Row {
        instance: LabeledInstance {
            tweet_id,
            text,
            rumour_id,
            event_id,
            order_index: 0,
            label,
            is_retweet,
        },
        order,
    })
}

fn finish(rows: Vec<Row>, errors: Vec<Error>) -> LoadedCorpus {
    let mut by_rumour: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_rumour.entry(r.instance.rumour_id.clone()).or_default().push(i);
    }
    let mut order_index = vec![0; rows.len()];
    for members in by_rumour.values_mut() {
        members.sort_by(|&a, &b| {
            let (ka, kb) = (rows[a].order.rank(), rows[b].order.rank());
            ka.partial_cmp(&kb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| rows[a].instance.tweet_id.cmp(&rows[b].instance.tweet_id))
        });
        for (rank, &i) in members.iter().enumerate() {
            order_index[i] = rank;
        }
    }
    let instances = rows
        .into_iter()
        .zip(order_index)
        .map(|(mut r, idx)| {
            r.instance.order_index = idx;
            r.instance
        })
        .collect();
    LoadedCorpus { instances, errors }
}

struct Collector<'a> {
    path: &'a Path,
    lenient: bool,
    rows: Vec<Row>,
    errors: Vec<Error>,
    seen: HashSet<String>,
}

impl Collector<'_> {
    fn push(&mut self, line: usize, row: std::result::Result<Row, String>) -> Result<()> {
        let row = row.and_then(|r| {
            if self.seen.insert(r.instance.tweet_id.clone()) {
                Ok(r)
            } else {
                Err(format!("duplicate tweet id {:?}", r.instance.tweet_id))
            }
        });
        match row {
            Ok(r) => self.rows.push(r),
            Err(message) => {
                let err = Error::Parse {
                    path: self.path.to_path_buf(),
                    line,
                    message,
                };
                if !self.lenient {
                    return Err(err);
                }
                self.errors.push(err);
            }
        }
        Ok(())
    }
}

pub fn parse_jsonl(contents: &str, path: &Path, mapping: &FieldMapping, lenient: bool) -> Result<LoadedCorpus> {
    let mut c = Collector {
        path,
        lenient,
        rows: Vec::new(),
        errors: Vec::new(),
        seen: HashSet::new(),
    };
    for (number, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(map)) => build_row(&map, mapping, number + 1),
            Ok(_) => Err("line is not a JSON object".to_string()),
            Err(e) => Err(format!("invalid JSON: {e}")),
        };
        c.push(number + 1, row)?;
    }
    if c.rows.is_empty() && c.errors.is_empty() {
        return Err(Error::InvalidInput(format!("empty corpus: {}", path.display())));
    }
    Ok(finish(c.rows, c.errors))
}

pub fn parse_csv(contents: &str, path: &Path, mapping: &FieldMapping, lenient: bool) -> Result<LoadedCorpus> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(contents.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    let headers = headers.clone();
    let mut c = Collector {
        path,
        lenient,
        rows: Vec::new(),
        errors: Vec::new(),
        seen: HashSet::new(),
    };
    for record in reader.records() {
        let (line, row) = match record {
            Ok(record) => {
                let line = record.position().map_or(0, |p| p.line() as usize);
                let row = CsvRow {
                    headers: &headers,
                    record,
                };
                (line, build_row(&row, mapping, line))
            }
            Err(e) => (e.position().map_or(0, |p| p.line() as usize), Err(e.to_string())),
        };
        c.push(line, row)?;
    }
    if c.rows.is_empty() && c.errors.is_empty() {
        return Err(Error::InvalidInput(format!("empty corpus: {}", path.display())));
    }
    Ok(finish(c.rows, c.errors))
}

pub fn load_corpus(path: &Path, format: CorpusFormat, mapping: &FieldMapping, lenient: bool) -> Result<LoadedCorpus> {
    let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CorpusFormat::Jsonl => parse_jsonl(&contents, path, mapping, lenient),
        CorpusFormat::Csv => parse_csv(&contents, path, mapping, lenient),
    }
}

/// Per-rumour label counts in rumour order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RumourCounts {
    pub rumour_id: String,
    pub supporting: usize,
    pub denying: usize,
    pub questioning: usize,
    pub unlabeled: usize,
}

impl RumourCounts {
    pub fn total(&self) -> usize {
        self.supporting + self.denying + self.questioning
    }
}

pub fn summarize(instances: &[LabeledInstance]) -> Vec<RumourCounts> {
    let mut map: BTreeMap<&str, RumourCounts> = BTreeMap::new();
    for i in instances {
        let entry = map.entry(&i.rumour_id).or_insert_with(|| RumourCounts {
            rumour_id: i.rumour_id.clone(),
            supporting: 0,
            denying: 0,
            questioning: 0,
            unlabeled: 0,
        });
        match i.label {
            Some(StanceLabel::Supporting) => entry.supporting += 1,
            Some(StanceLabel::Denying) => entry.denying += 1,
            Some(StanceLabel::Questioning) => entry.questioning += 1,
            None => entry.unlabeled += 1,
        }
    }
    map.into_values().collect()
}
