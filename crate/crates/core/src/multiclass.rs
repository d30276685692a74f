//! Three-way stance classification by one-vs-all binary GP classifiers.
//!
//! Each stance gets its own binary problem (+1 for the stance, -1 for the
//! rest) with separately tuned hyperparameters. Prediction takes the raw
//! argmax of the three probabilities, ties resolved by the fixed precedence
//! supporting > denying > questioning.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    optimize_hyperparameters, predict_probability, BinaryDataset, EpMeta, EpSites, EpState, FitConfig, OptimizerConfig,
};
use crate::kernels::{IcmKernelParams, KernelSpec, LinearKernelParams, TaskedInput};
use crate::seeds::derive_seed;
use crate::text::SparseFeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceLabel {
    Supporting,
    Denying,
    Questioning,
}

impl StanceLabel {
    /// All labels in tie-break precedence order.
    pub const ALL: [StanceLabel; 3] = [StanceLabel::Supporting, StanceLabel::Denying, StanceLabel::Questioning];

    pub fn index(self) -> usize {
        match self {
            StanceLabel::Supporting => 0,
            StanceLabel::Denying => 1,
            StanceLabel::Questioning => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Supporting => "supporting",
            StanceLabel::Denying => "denying",
            StanceLabel::Questioning => "questioning",
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StanceLabel {
    type Err = Error;

    /// Accepts the full names plus `s`/`d`/`q` and `support`/`deny`/`question`, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "supporting" | "support" | "s" => Ok(StanceLabel::Supporting),
            "denying" | "deny" | "d" => Ok(StanceLabel::Denying),
            "questioning" | "question" | "q" => Ok(StanceLabel::Questioning),
            other => Err(Error::InvalidInput(format!("unknown stance label {other:?}"))),
        }
    }
}

/// Index of the largest score; earlier entries win exact ties.
pub fn argmax_with_precedence(scores: &[f64; 3]) -> StanceLabel {
    let mut best = 0;
    for i in 1..3 {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    StanceLabel::ALL[best]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodVariant {
    /// Target-rumour data only, single task.
    #[serde(rename = "GP")]
    Gp,
    /// All training data pooled into one task.
    #[serde(rename = "GPPooled")]
    GpPooled,
    /// All training data, one ICM task per rumour.
    #[serde(rename = "GPICM")]
    GpIcm,
}

impl MethodVariant {
    pub fn name(self) -> &'static str {
        match self {
            MethodVariant::Gp => "GP",
            MethodVariant::GpPooled => "GPPooled",
            MethodVariant::GpIcm => "GPICM",
        }
    }
}

/// A featurised tweet ready for training or prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceExample {
    pub tweet_id: String,
    pub rumour_id: String,
    pub features: SparseFeatureVector,
    pub label: Option<StanceLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub fit: FitConfig,
    pub optimizer: OptimizerConfig,
    /// Initial ICM parameters: every κ_d and every v_d start at these values.
    /// v = 0 is a stationary point of the evidence in v, so the default
    /// starts the tasks correlated.
    pub icm_init_kappa: f64,
    pub icm_init_v: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            optimizer: OptimizerConfig::default(),
            icm_init_kappa: 1.0,
            icm_init_v: 1.0,
        }
    }
}

/// One fitted one-vs-all problem.
#[derive(Debug, Clone)]
pub struct BinaryGp {
    pub kernel: KernelSpec,
    pub data: BinaryDataset,
    pub state: EpState,
    pub warnings: Vec<String>,
}

impl BinaryGp {
    pub fn predict(&self, input: &TaskedInput) -> Result<crate::inference::Predictive> {
        predict_probability(&self.state, &self.data, &self.kernel, input)
    }
}

#[derive(Debug, Clone)]
pub struct StanceModel {
    pub variant: MethodVariant,
    pub target_rumour: String,
    /// Rumour id → task id. Empty for the single-task variants.
    pub task_mapping: BTreeMap<String, usize>,
    pub target_task: usize,
    /// Indexed by [`StanceLabel::index`].
    pub per_class_models: [BinaryGp; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StancePrediction {
    pub label: StanceLabel,
    /// Raw one-vs-all probabilities in label order.
    pub probabilities: [f64; 3],
    /// Number of class models that clamped a negative predictive variance.
    pub clamped_variances: usize,
}

fn task_mapping(train: &[&StanceExample]) -> BTreeMap<String, usize> {
    let rumours: BTreeSet<&str> = train.iter().map(|e| e.rumour_id.as_str()).collect();
    rumours.into_iter().enumerate().map(|(i, r)| (r.to_string(), i)).collect()
}

/// Trains the three one-vs-all classifiers for `variant`.
///
/// `target_rumour` selects the data for the GP variant and the task reserved
/// for unseen rumours under GPICM.
pub fn train_stance_model(
    train: &[StanceExample],
    variant: MethodVariant,
    target_rumour: &str,
    cfg: &TrainConfig,
) -> Result<StanceModel> {
    if train.is_empty() {
        return Err(Error::Training("training set is empty".into()));
    }
    if let Some(e) = train.iter().find(|e| e.label.is_none()) {
        return Err(Error::Training(format!("training instance {} has no stance label", e.tweet_id)));
    }
    let selected: Vec<&StanceExample> = match variant {
        MethodVariant::Gp => {
            let target: Vec<_> = train.iter().filter(|e| e.rumour_id == target_rumour).collect();
            if target.is_empty() {
                return Err(Error::Training(format!(
                    "GP variant has no training data from target rumour {target_rumour:?}; it only applies in the leave-part-out setting"
                )));
            }
            target
        }
        MethodVariant::GpPooled | MethodVariant::GpIcm => train.iter().collect(),
    };

    let (mapping, kernel_init) = match variant {
        MethodVariant::Gp | MethodVariant::GpPooled => (BTreeMap::new(), KernelSpec::linear(1.0)?),
        MethodVariant::GpIcm => {
            let mapping = task_mapping(&selected);
            if !mapping.contains_key(target_rumour) {
                return Err(Error::Training(format!(
                    "GPICM needs training data from target rumour {target_rumour:?}; without it the task correlations are unidentifiable"
                )));
            }
            let tasks = mapping.len();
            let kernel = KernelSpec::Icm(IcmKernelParams::new(
                LinearKernelParams::default(),
                vec![cfg.icm_init_kappa; tasks],
                vec![cfg.icm_init_v; tasks],
            )?);
            (mapping, kernel)
        }
    };
    let target_task = mapping.get(target_rumour).copied().unwrap_or(0);
    let inputs: Vec<TaskedInput> = selected
        .iter()
        .map(|e| TaskedInput::new(e.features.clone(), mapping.get(&e.rumour_id).copied().unwrap_or(0)))
        .collect();

    let fitted: Vec<Result<BinaryGp>> = StanceLabel::ALL
        .par_iter()
        .map(|&class| {
            let labels = selected
                .iter()
                .map(|e| if e.label == Some(class) { 1 } else { -1 })
                .collect();
            let data = BinaryDataset::new(inputs.clone(), labels)?;
            let opt = OptimizerConfig {
                seed: derive_seed(cfg.optimizer.seed, &[class.index() as u64]),
                ..cfg.optimizer
            };
            let outcome = optimize_hyperparameters(&data, &kernel_init, &cfg.fit, &opt)?;
            let mut warnings = outcome.warnings;
            if !outcome.state.converged {
                warnings.push(format!("{class} model: EP did not converge"));
            }
            Ok(BinaryGp {
                kernel: outcome.kernel,
                data,
                state: outcome.state,
                warnings,
            })
        })
        .collect();
    let mut models = Vec::with_capacity(3);
    for m in fitted {
        models.push(m?);
    }
    let per_class_models: [BinaryGp; 3] = models.try_into().map_err(|_| Error::Training("expected three class models".into()))?;
    Ok(StanceModel {
        variant,
        target_rumour: target_rumour.to_string(),
        task_mapping: mapping,
        target_task,
        per_class_models,
    })
}

impl StanceModel {
    /// Task id for a rumour; rumours unseen in training use the target task.
    pub fn task_for(&self, rumour_id: &str) -> usize {
        match self.variant {
            MethodVariant::GpIcm => self.task_mapping.get(rumour_id).copied().unwrap_or(self.target_task),
            _ => 0,
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        self.per_class_models
            .iter()
            .flat_map(|m| m.warnings.iter().cloned())
            .collect()
    }
}

pub fn predict_stance(model: &StanceModel, example: &StanceExample) -> Result<StancePrediction> {
    let input = TaskedInput::new(example.features.clone(), model.task_for(&example.rumour_id));
    let mut probabilities = [0.0; 3];
    let mut clamped = 0;
    for (slot, class_model) in probabilities.iter_mut().zip(&model.per_class_models) {
        let p = class_model.predict(&input)?;
        clamped += usize::from(p.variance_clamped);
        *slot = p.probability;
    }
    Ok(StancePrediction {
        label: argmax_with_precedence(&probabilities),
        probabilities,
        clamped_variances: clamped,
    })
}

/// Serialisable form of a [`StanceModel`]: everything the predictive
/// equations need, including the training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceModelRecord {
    pub variant: MethodVariant,
    pub target_rumour: String,
    pub task_mapping: BTreeMap<String, usize>,
    pub target_task: usize,
    pub classes: Vec<BinaryGpRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryGpRecord {
    pub kernel: KernelSpec,
    pub data: BinaryDataset,
    pub sites: EpSites,
    pub meta: EpMeta,
    pub jitter: f64,
    pub warnings: Vec<String>,
}

impl StanceModel {
    pub fn to_record(&self) -> StanceModelRecord {
        StanceModelRecord {
            variant: self.variant,
            target_rumour: self.target_rumour.clone(),
            task_mapping: self.task_mapping.clone(),
            target_task: self.target_task,
            classes: self
                .per_class_models
                .iter()
                .map(|m| BinaryGpRecord {
                    kernel: m.kernel.clone(),
                    data: m.data.clone(),
                    sites: m.state.sites(),
                    meta: m.state.meta(),
                    jitter: m.state.jitter,
                    warnings: m.warnings.clone(),
                })
                .collect(),
        }
    }

    pub fn from_record(record: StanceModelRecord) -> Result<Self> {
        if record.classes.len() != 3 {
            return Err(Error::ModelFormat(format!("expected 3 class models, found {}", record.classes.len())));
        }
        let mut models = Vec::with_capacity(3);
        for c in record.classes {
            c.kernel.validate()?;
            c.kernel.check_inputs(c.data.inputs())?;
            let state = EpState::from_sites(&c.data, &c.kernel, &c.sites, c.jitter, c.meta)?;
            models.push(BinaryGp {
                kernel: c.kernel,
                data: c.data,
                state,
                warnings: c.warnings,
            });
        }
        let per_class_models: [BinaryGp; 3] = models.try_into().map_err(|_| Error::ModelFormat("class count".into()))?;
        Ok(StanceModel {
            variant: record.variant,
            target_rumour: record.target_rumour,
            task_mapping: record.task_mapping,
            target_task: record.target_task,
            per_class_models,
        })
    }
}
