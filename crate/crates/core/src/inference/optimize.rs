//! Evidence maximisation over kernel hyperparameters.
//!
//! BFGS ascent in the unconstrained coordinates `(log σ², log κ, v)` with a
//! backtracking line search. A trial point is accepted only when the EP
//! evidence satisfies the sufficient-increase condition, so the accepted
//! evidence trace is nondecreasing. Each start is optimised independently;
//! the best final evidence wins, ties going to the earliest start.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ep::{ep_fit_from, log_evidence_gradient, BinaryDataset, EpMeta, EpSites, EpState, FitConfig};
use super::weight_space::{ep_fit_weight_space, weight_space_gradient, FeatureDesign};
use crate::error::{Error, Result};
use crate::kernels::{IcmKernelParams, KernelSpec, LinearKernelParams};

/// Box bounds on the unconstrained coordinates.
const LOG_SIGNAL_BOUNDS: (f64, f64) = (-9.0, 9.0);
const LOG_KAPPA_BOUNDS: (f64, f64) = (-14.0, 9.0);
const V_BOUNDS: (f64, f64) = (-100.0, 100.0);
/// Largest coordinate change proposed by a single quasi-Newton step.
const MAX_STEP: f64 = 2.0;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;
const GRADIENT_TOLERANCE: f64 = 1e-6;
const VALUE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Random starts in addition to the supplied initial kernel.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            restarts: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationOutcome {
    pub kernel: KernelSpec,
    /// EP fit at `kernel`.
    pub state: EpState,
    pub log_evidence: f64,
    /// Accepted evidence values of the winning start, starting with its initial point.
    pub trace: Vec<f64>,
    pub start_index: usize,
    pub warnings: Vec<String>,
}

struct Evaluation {
    theta: Vec<f64>,
    kernel: KernelSpec,
    sites: EpSites,
    meta: EpMeta,
    gradient: Vec<f64>,
}

/// Fits EP at `theta`, in weight space when the explicit feature map is
/// narrower than the data, and returns the evidence gradient.
fn evaluate(
    data: &BinaryDataset,
    template: &KernelSpec,
    theta: &[f64],
    cfg: &FitConfig,
    warm: Option<&EpSites>,
) -> Result<Evaluation> {
    let kernel = template.from_unconstrained(theta)?;
    let (sites, meta, gradient) = match FeatureDesign::build(data, &kernel) {
        Some(design) => {
            let fit = ep_fit_weight_space(&design, data, cfg, warm)?;
            let gradient = weight_space_gradient(&fit, &design, data, &kernel)?;
            (fit.sites, fit.meta, gradient)
        }
        None => {
            let state = ep_fit_from(data, &kernel, cfg, warm)?;
            let gradient = log_evidence_gradient(&state, data, &kernel)?;
            (state.sites(), state.meta(), gradient)
        }
    };
    if !meta.converged {
        return Err(Error::Numerical(format!(
            "EP did not converge within {} sweeps",
            cfg.ep_max_sweeps
        )));
    }
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite evidence gradient".into()));
    }
    Ok(Evaluation {
        theta: theta.to_vec(),
        kernel,
        sites,
        meta,
        gradient,
    })
}

fn bounds_for(template: &KernelSpec) -> Vec<(f64, f64)> {
    let mut bounds = vec![LOG_SIGNAL_BOUNDS];
    if let KernelSpec::Icm(p) = template {
        bounds.extend(std::iter::repeat_n(LOG_KAPPA_BOUNDS, p.task_count));
        bounds.extend(std::iter::repeat_n(V_BOUNDS, p.task_count));
    }
    bounds
}

fn project(theta: &mut [f64], bounds: &[(f64, f64)]) {
    for (t, (lo, hi)) in theta.iter_mut().zip(bounds) {
        *t = t.clamp(*lo, *hi);
    }
}

/// Runs BFGS ascent from one start. Returns the final evaluation and the
/// evidence trace of accepted iterates.
fn ascend(
    data: &BinaryDataset,
    start: &KernelSpec,
    cfg: &FitConfig,
    max_iters: usize,
) -> Result<(Evaluation, Vec<f64>)> {
    let bounds = bounds_for(start);
    let mut theta = start.to_unconstrained();
    project(&mut theta, &bounds);
    let mut current = evaluate(data, start, &theta, cfg, None)?;
    let mut trace = vec![current.meta.log_evidence];
    let dim = theta.len();
    let mut inv_hessian = DMatrix::<f64>::identity(dim, dim);

    for _ in 0..max_iters {
        let grad = DVector::from_vec(current.gradient.clone());
        if grad.amax() < GRADIENT_TOLERANCE {
            break;
        }
        let mut direction = &inv_hessian * &grad;
        if direction.dot(&grad) <= 0.0 {
            inv_hessian = DMatrix::identity(dim, dim);
            direction = grad.clone();
        }
        let largest = direction.amax();
        if largest > MAX_STEP {
            direction *= MAX_STEP / largest;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = current.theta.iter().zip(direction.iter()).map(|(t, d)| t + step * d).collect();
            project(&mut trial, &bounds);
            let moved: f64 = trial.iter().zip(&current.theta).map(|(a, b)| (a - b).abs()).sum();
            if moved == 0.0 {
                break;
            }
            let predicted: f64 = trial
                .iter()
                .zip(&current.theta)
                .zip(grad.iter())
                .map(|((a, b), g)| (a - b) * g)
                .sum();
            if let Ok(candidate) = evaluate(data, start, &trial, cfg, Some(&current.sites)) {
                let gain = candidate.meta.log_evidence - current.meta.log_evidence;
                if gain >= ARMIJO * predicted.max(0.0) && gain >= 0.0 {
                    accepted = Some(candidate);
                    break;
                }
            }
            step *= 0.5;
        }
        let Some(next) = accepted else { break };

        let s = DVector::from_iterator(dim, next.theta.iter().zip(&current.theta).map(|(a, b)| a - b));
        // curvature pair for the minimisation of -log evidence
        let y = DVector::from_iterator(dim, current.gradient.iter().zip(&next.gradient).map(|(g0, g1)| g0 - g1));
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let identity = DMatrix::<f64>::identity(dim, dim);
            let left = &identity - rho * &s * y.transpose();
            let right = &identity - rho * &y * s.transpose();
            inv_hessian = &left * &inv_hessian * &right + rho * &s * s.transpose();
        }

        let gain = next.meta.log_evidence - current.meta.log_evidence;
        trace.push(next.meta.log_evidence);
        current = next;
        if gain < VALUE_TOLERANCE * (1.0 + current.meta.log_evidence.abs()) {
            break;
        }
    }
    Ok((current, trace))
}

/// Seeded random starts: σ² = 1, κ = 1, v ~ U(-0.5, 0.5).
fn random_starts(init: &KernelSpec, restarts: usize, seed: u64) -> Vec<KernelSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..restarts)
        .map(|_| match init {
            KernelSpec::Linear(_) => KernelSpec::Linear(LinearKernelParams::default()),
            KernelSpec::Icm(p) => KernelSpec::Icm(IcmKernelParams {
                data_kernel: LinearKernelParams::default(),
                task_count: p.task_count,
                kappa: vec![1.0; p.task_count],
                v: (0..p.task_count).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            }),
        })
        .collect()
}

/// Maximises the EP evidence over the kernel hyperparameters.
///
/// With `max_iters == 0`, or when the labels contain a single class, the
/// initial kernel is returned unchanged (the latter with a warning).
pub fn optimize_hyperparameters(
    data: &BinaryDataset,
    kernel_init: &KernelSpec,
    cfg: &FitConfig,
    opt: &OptimizerConfig,
) -> Result<OptimizationOutcome> {
    kernel_init.validate()?;
    let mut warnings = Vec::new();
    if opt.max_iters == 0 || !data.has_both_classes() {
        if !data.has_both_classes() {
            warnings.push("single-class training labels; hyperparameter optimisation skipped".to_string());
        }
        let state = match FeatureDesign::build(data, kernel_init) {
            Some(design) => {
                let fit = ep_fit_weight_space(&design, data, cfg, None)?;
                EpState::from_sites(data, kernel_init, &fit.sites, cfg.jitter, fit.meta)?
            }
            None => ep_fit_from(data, kernel_init, cfg, None)?,
        };
        if !state.converged {
            warnings.push(format!("EP did not converge within {} sweeps", cfg.ep_max_sweeps));
        }
        return Ok(OptimizationOutcome {
            kernel: kernel_init.clone(),
            log_evidence: state.log_evidence,
            trace: vec![state.log_evidence],
            state,
            start_index: 0,
            warnings,
        });
    }

    let mut starts = vec![kernel_init.clone()];
    for candidate in random_starts(kernel_init, opt.restarts, opt.seed) {
        if !starts.contains(&candidate) {
            starts.push(candidate);
        }
    }
    let runs: Vec<Result<(Evaluation, Vec<f64>)>> = starts
        .par_iter()
        .map(|start| ascend(data, start, cfg, opt.max_iters))
        .collect();

    let mut best: Option<(usize, Evaluation, Vec<f64>)> = None;
    let mut failures = Vec::new();
    for (index, run) in runs.into_iter().enumerate() {
        match run {
            Ok((eval, trace)) => {
                let better = best
                    .as_ref()
                    .map_or(true, |(_, b, _)| eval.meta.log_evidence > b.meta.log_evidence);
                if better {
                    best = Some((index, eval, trace));
                }
            }
            Err(e) => failures.push(format!("start {index}: {e}")),
        }
    }
    if !failures.is_empty() {
        warnings.extend(failures.iter().cloned());
    }
    let (start_index, eval, trace) = best.ok_or_else(|| {
        Error::Numerical(format!("every optimisation start failed: {}", failures.join("; ")))
    })?;
    let state = EpState::from_sites(data, &eval.kernel, &eval.sites, cfg.jitter, eval.meta)?;
    Ok(OptimizationOutcome {
        kernel: eval.kernel,
        log_evidence: eval.meta.log_evidence,
        state,
        trace,
        start_index,
        warnings,
    })
}
