//! Fold construction, baselines and the LOO/LPO experiment runner.

mod baselines;
mod folds;
mod plan;
mod runner;

pub use baselines::{
    fit_binary_logreg, logreg_gradient, logreg_objective, majority_label, run_baseline_logreg, run_baseline_majority,
    run_baseline_nb, BinaryLogReg, LogRegModel, NaiveBayesModel,
};
pub use folds::{build_folds, check_disjoint, unit_of, Fold, FoldSet};
pub use plan::{ExperimentPlan, FoldUnit, Method, Protocol};
pub use runner::{run_experiment, AggregateResult, ExperimentConfig, ExperimentResults, FoldResult};
