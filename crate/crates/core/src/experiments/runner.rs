use std::collections::HashSet;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{run_baseline_logreg, run_baseline_majority, run_baseline_nb};
use super::folds::{build_folds, check_disjoint, unit_of, Fold};
use super::plan::{ExperimentPlan, Method};
use crate::error::{Error, Result};
use crate::evaluation::{micro_average_across_folds, ConfusionMatrix, EvaluationReport};
use crate::multiclass::{predict_stance, train_stance_model, StanceExample, StanceLabel, TrainConfig};
use crate::seeds::derive_seed;
use crate::text::{FeatureMode, Featurizer, LabeledInstance, SparseFeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub l2_strength: f64,
    pub nb_alpha: f64,
    /// Drop retweets from training splits.
    pub filter_retweets: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            l2_strength: 1.0,
            nb_alpha: 1.0,
            filter_retweets: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: String,
    pub method: Method,
    pub k: usize,
    pub confusion: ConfusionMatrix,
    pub wall_seconds: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub method: Method,
    pub k: usize,
    /// Folds that contributed; failed cells are left out.
    pub folds: usize,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub fold_results: Vec<FoldResult>,
    pub aggregates: Vec<AggregateResult>,
    /// Test tweet ids per fold, in target order.
    pub test_sets: Vec<(String, Vec<String>)>,
    pub skipped_folds: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    fold: usize,
    k: usize,
    method: Method,
}

fn encode_all(corpus: &[LabeledInstance], featurizer: &Featurizer) -> Vec<SparseFeatureVector> {
    corpus.par_iter().map(|inst| featurizer.encode(&inst.text)).collect()
}

/// Runs every (fold, method, k) cell and pools each (method, k) across folds.
pub fn run_experiment(
    corpus: &[LabeledInstance],
    plan: &ExperimentPlan,
    cfg: &ExperimentConfig,
    featurizer: &Featurizer,
) -> Result<ExperimentResults> {
    plan.validate()?;
    let mut warnings = Vec::new();
    let unlabeled = corpus.iter().filter(|i| i.label.is_none()).count();
    let labeled: Vec<LabeledInstance> = corpus.iter().filter(|i| i.label.is_some()).cloned().collect();
    if unlabeled > 0 {
        warnings.push(format!("{unlabeled} unlabeled instances ignored"));
    }
    let folds = build_folds(&labeled, plan)?;
    if folds.folds.is_empty() {
        return Err(Error::InvalidInput("every fold was skipped; no target unit is long enough".into()));
    }

    // Brown features do not depend on the split, so encode once
    let cached = (featurizer.mode() == FeatureMode::Brown).then(|| encode_all(&labeled, featurizer));

    let mut cells = Vec::new();
    for (fold, _) in folds.folds.iter().enumerate() {
        for &method in &plan.methods {
            for &k in &plan.target_train_sizes {
                if method.applies_at(k) {
                    cells.push(Cell { fold, k, method });
                }
            }
        }
    }

    let outcomes: Vec<std::result::Result<FoldResult, String>> = cells
        .par_iter()
        .map(|cell| {
            let fold = &folds.folds[cell.fold];
            run_cell(&labeled, fold, cell, plan, cfg, featurizer, cached.as_deref())
                .map_err(|e| format!("{} k={} fold {}: {e}", cell.method, cell.k, fold.unit))
        })
        .collect();

    let mut fold_results = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => fold_results.push(r),
            Err(w) => warnings.push(w),
        }
    }

    let mut aggregates = Vec::new();
    for &method in &plan.methods {
        for &k in &plan.target_train_sizes {
            let matrices: Vec<ConfusionMatrix> = fold_results
                .iter()
                .filter(|r| r.method == method && r.k == k)
                .map(|r| r.confusion)
                .collect();
            if matrices.is_empty() {
                continue;
            }
            aggregates.push(AggregateResult {
                method,
                k,
                folds: matrices.len(),
                report: micro_average_across_folds(&matrices)?,
            });
        }
    }

    let test_sets = folds
        .folds
        .iter()
        .map(|f| (f.unit.clone(), f.test().iter().map(|&i| labeled[i].tweet_id.clone()).collect()))
        .collect();
    Ok(ExperimentResults {
        fold_results,
        aggregates,
        test_sets,
        skipped_folds: folds.skipped,
        warnings,
    })
}

fn run_cell(
    corpus: &[LabeledInstance],
    fold: &Fold,
    cell: &Cell,
    plan: &ExperimentPlan,
    cfg: &ExperimentConfig,
    featurizer: &Featurizer,
    cached: Option<&[SparseFeatureVector]>,
) -> Result<FoldResult> {
    let started = Instant::now();
    let mut warnings = Vec::new();
    let mut train_idx = fold.train(cell.k);
    let test_idx = fold.test();
    check_disjoint(corpus, &train_idx, test_idx)?;
    if cfg.filter_retweets {
        let before = train_idx.len();
        train_idx.retain(|&i| !corpus[i].looks_like_retweet());
        let dropped = before - train_idx.len();
        if dropped > 0 {
            warnings.push(format!("{dropped} retweets removed from training"));
        }
    }
    if train_idx.is_empty() {
        return Err(Error::Training("training split is empty".into()));
    }

    // bag-of-words vocabularies are grown on the training split only
    let fitted = match cached {
        Some(_) => None,
        None => {
            let mut f = featurizer.clone();
            f.fit(train_idx.iter().map(|&i| corpus[i].text.as_str()));
            Some(f)
        }
    };
    let features = |i: usize| -> SparseFeatureVector {
        match (cached, &fitted) {
            (Some(c), _) => c[i].clone(),
            (None, Some(f)) => f.encode(&corpus[i].text),
            (None, None) => unreachable!("featurizer is fitted when nothing is cached"),
        }
    };
    let example = |i: usize| StanceExample {
        tweet_id: corpus[i].tweet_id.clone(),
        rumour_id: unit_of(&corpus[i], plan.fold_unit).to_string(),
        features: features(i),
        label: corpus[i].label,
    };
    let train: Vec<StanceExample> = train_idx.iter().map(|&i| example(i)).collect();
    let test: Vec<StanceExample> = test_idx.iter().map(|&i| example(i)).collect();

    let predictions = match cell.method {
        Method::Majority => run_baseline_majority(&train, &test),
        Method::NaiveBayes => run_baseline_nb(&train, &test, cfg.nb_alpha),
        Method::MaxEnt => run_baseline_logreg(&train, &test, cfg.l2_strength),
        Method::Gp | Method::GpPooled | Method::GpIcm => {
            let variant = cell.method.gp_variant().expect("GP method");
            let mut train_cfg = cfg.train;
            train_cfg.optimizer.seed = derive_seed(
                plan.seed,
                &[cell.fold as u64, cell.k as u64, cell.method as u64],
            );
            let model = train_stance_model(&train, variant, &fold.unit, &train_cfg)?;
            warnings.extend(model.warnings());
            let mut out = Vec::with_capacity(test.len());
            let mut clamped = 0;
            for e in &test {
                let p = predict_stance(&model, e)?;
                clamped += p.clamped_variances;
                out.push(p.label);
            }
            if clamped > 0 {
                warnings.push(format!("{clamped} negative predictive variances clamped"));
            }
            out
        }
    };
    let truths: Vec<StanceLabel> = test.iter().map(|e| e.label.expect("labeled corpus")).collect();
    let confusion = ConfusionMatrix::from_pairs(&truths, &predictions)?;
    Ok(FoldResult {
        fold: fold.unit.clone(),
        method: cell.method,
        k: cell.k,
        confusion,
        wall_seconds: started.elapsed().as_secs_f64(),
        warnings,
    })
}

impl ExperimentResults {
    /// Deterministic results table: one row per fold cell followed by the
    /// pooled `all` rows. Timings are deliberately excluded.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,k,fold,micro_f1,macro_f1");
        for label in StanceLabel::ALL {
            let _ = write!(out, ",{label}_p,{label}_r,{label}_f1");
        }
        out.push('\n');
        let mut row = |method: Method, k: usize, fold: &str, report: &EvaluationReport| {
            let _ = write!(out, "{},{k},{fold},{},{}", method.name(), report.micro.f1, report.macro_.f1);
            for s in &report.per_class {
                let _ = write!(out, ",{},{},{}", s.precision, s.recall, s.f1);
            }
            out.push('\n');
        };
        for r in &self.fold_results {
            if let Ok(report) = crate::evaluation::report_from_confusion(r.confusion) {
                row(r.method, r.k, &r.fold, &report);
            }
        }
        for a in &self.aggregates {
            row(a.method, a.k, "all", &a.report);
        }
        out
    }

    pub fn aggregate(&self, method: Method, k: usize) -> Option<&AggregateResult> {
        self.aggregates.iter().find(|a| a.method == method && a.k == k)
    }

    /// Distinct (method, k) pairs with at least one fold result.
    pub fn grid(&self) -> HashSet<(Method, usize)> {
        self.fold_results.iter().map(|r| (r.method, r.k)).collect()
    }
}
