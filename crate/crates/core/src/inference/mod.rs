//! Binary GP classification: probit link, EP posterior, evidence and its
//! gradient, and evidence-based hyperparameter selection.

mod ep;
mod optimize;
mod weight_space;
pub mod probit;

pub use ep::{
    ep_fit, ep_fit_from, ep_fit_gram, log_evidence_gradient, predict_probability, probit_site_update,
    tilted_moments, BinaryDataset, EpMeta, EpSites, EpState, FitConfig, Predictive,
};
pub use optimize::{optimize_hyperparameters, OptimizationOutcome, OptimizerConfig};
pub use probit::probit;
