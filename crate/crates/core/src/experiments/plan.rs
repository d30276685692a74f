use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiclass::MethodVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Protocol {
    /// Leave one out: no target data in training.
    Loo,
    /// Leave part out: the first k target instances join the training set.
    Lpo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldUnit {
    #[default]
    Rumour,
    Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Majority,
    #[serde(rename = "NB")]
    NaiveBayes,
    MaxEnt,
    #[serde(rename = "GP")]
    Gp,
    #[serde(rename = "GPPooled")]
    GpPooled,
    #[serde(rename = "GPICM")]
    GpIcm,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Majority,
        Method::NaiveBayes,
        Method::MaxEnt,
        Method::Gp,
        Method::GpPooled,
        Method::GpIcm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Majority => "Majority",
            Method::NaiveBayes => "NB",
            Method::MaxEnt => "MaxEnt",
            Method::Gp => "GP",
            Method::GpPooled => "GPPooled",
            Method::GpIcm => "GPICM",
        }
    }

    pub fn gp_variant(self) -> Option<MethodVariant> {
        match self {
            Method::Gp => Some(MethodVariant::Gp),
            Method::GpPooled => Some(MethodVariant::GpPooled),
            Method::GpIcm => Some(MethodVariant::GpIcm),
            _ => None,
        }
    }

    /// GP and GPICM need target-rumour training data, so they have no cell at k = 0.
    pub fn applies_at(self, k: usize) -> bool {
        !(k == 0 && matches!(self, Method::Gp | Method::GpIcm))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lowered = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        Method::ALL
            .into_iter()
            .find(|m| m.name().to_ascii_lowercase() == lowered)
            .or(match lowered.as_str() {
                "naivebayes" => Some(Method::NaiveBayes),
                "logreg" | "logisticregression" => Some(Method::MaxEnt),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidInput(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub protocol: Protocol,
    pub target_train_sizes: Vec<usize>,
    /// First test index within the ordered target unit; defaults to the
    /// largest training size.
    #[serde(default)]
    pub test_offset: Option<usize>,
    #[serde(default)]
    pub fold_unit: FoldUnit,
    #[serde(default)]
    pub seed: u64,
    pub methods: Vec<Method>,
}

impl ExperimentPlan {
    pub fn loo(methods: Vec<Method>) -> Self {
        Self {
            protocol: Protocol::Loo,
            target_train_sizes: vec![0],
            test_offset: None,
            fold_unit: FoldUnit::Rumour,
            seed: 0,
            methods,
        }
    }

    /// The sweep k = 0, 10, ..., 50 with the test set starting at index 50.
    pub fn lpo_sweep(methods: Vec<Method>) -> Self {
        Self {
            protocol: Protocol::Lpo,
            target_train_sizes: vec![0, 10, 20, 30, 40, 50],
            test_offset: None,
            fold_unit: FoldUnit::Rumour,
            seed: 0,
            methods,
        }
    }

    pub fn resolved_test_offset(&self) -> usize {
        self.test_offset
            .unwrap_or_else(|| self.target_train_sizes.iter().copied().max().unwrap_or(0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_train_sizes.is_empty() {
            return Err(Error::InvalidInput("target_train_sizes is empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("no methods selected".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.methods {
            if !seen.insert(*m) {
                return Err(Error::InvalidInput(format!("method {m} listed twice")));
            }
        }
        let mut sizes = std::collections::BTreeSet::new();
        for k in &self.target_train_sizes {
            if !sizes.insert(*k) {
                return Err(Error::InvalidInput(format!("training size {k} listed twice")));
            }
        }
        match self.protocol {
            Protocol::Loo => {
                if self.target_train_sizes != [0] {
                    return Err(Error::InvalidInput("LOO requires target_train_sizes = [0]".into()));
                }
                if self.test_offset.unwrap_or(0) != 0 {
                    return Err(Error::InvalidInput("LOO tests on the whole target unit; test_offset must be 0".into()));
                }
            }
            Protocol::Lpo => {
                let offset = self.resolved_test_offset();
                if let Some(k) = self.target_train_sizes.iter().find(|&&k| k > offset) {
                    return Err(Error::InvalidInput(format!(
                        "training size {k} exceeds test_offset {offset}; test instances would leak into training"
                    )));
                }
            }
        }
        Ok(())
    }
}
