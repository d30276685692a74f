//! Expectation propagation for binary GP classification with a probit link.
//!
//! The posterior over latent values is `q(f) ∝ N(f | 0, K) Π N(f_i | ν̃_i/τ̃_i, 1/τ̃_i)`.
//! Sites are refreshed one at a time in index order; after every sweep the
//! posterior is recomputed from scratch through the Cholesky factor of
//! `B = I + S^½ K S^½`, `S = diag(τ̃)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::probit::{inverse_mills_ratio, log_probit, probit};
use crate::error::{Error, Result};
use crate::kernels::{gram_matrix, KernelSpec, TaskedInput, DEFAULT_JITTER};

/// Binary training data: inputs with labels in {+1, -1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryDataset {
    inputs: Vec<TaskedInput>,
    labels: Vec<i8>,
}

impl BinaryDataset {
    pub fn new(inputs: Vec<TaskedInput>, labels: Vec<i8>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidInput("binary dataset needs at least one instance".into()));
        }
        if inputs.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(Error::InvalidInput(format!("binary labels must be +1 or -1, got {bad}")));
        }
        Ok(Self { inputs, labels })
    }

    pub fn inputs(&self) -> &[TaskedInput] {
        &self.inputs
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// True when both classes are present.
    pub fn has_both_classes(&self) -> bool {
        self.labels.contains(&1) && self.labels.contains(&-1)
    }

    /// Copy with every label negated.
    pub fn flipped(&self) -> Self {
        Self {
            inputs: self.inputs.clone(),
            labels: self.labels.iter().map(|y| -y).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub ep_tolerance: f64,
    pub ep_max_sweeps: usize,
    pub damping: f64,
    pub jitter: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            ep_tolerance: 1e-6,
            ep_max_sweeps: 100,
            damping: 0.8,
            jitter: DEFAULT_JITTER,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ep_tolerance > 0.0) {
            return Err(Error::InvalidInput("ep_tolerance must be positive".into()));
        }
        if self.ep_max_sweeps == 0 {
            return Err(Error::InvalidInput("ep_max_sweeps must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidInput("damping must lie in (0, 1]".into()));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::InvalidInput("jitter must be >= 0".into()));
        }
        Ok(())
    }
}

/// Site natural parameters; the serializable part of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpSites {
    pub precision: Vec<f64>,
    pub location: Vec<f64>,
}

impl EpSites {
    pub fn zeros(n: usize) -> Self {
        Self {
            precision: vec![0.0; n],
            location: vec![0.0; n],
        }
    }
}

/// Fitted EP approximation for one binary problem.
#[derive(Debug, Clone)]
pub struct EpState {
    pub site_precision: DVector<f64>,
    pub site_location: DVector<f64>,
    /// Lower Cholesky factor of `I + S^½ K S^½`.
    pub posterior_cholesky: DMatrix<f64>,
    pub log_evidence: f64,
    pub converged: bool,
    pub sweeps_used: usize,
    /// Largest site change on the final sweep.
    pub last_change: f64,
    /// Site updates skipped because of a non-positive cavity precision.
    pub skipped_updates: usize,
    pub jitter: f64,
    sqrt_precision: DVector<f64>,
    /// `α = (K + S⁻¹)⁻¹ S⁻¹ν̃`; the predictive mean is `k*ᵀα`.
    alpha: DVector<f64>,
}

/// Posterior factors for fixed sites.
struct Factors {
    chol: Cholesky<f64, Dyn>,
    sqrt_tau: DVector<f64>,
}

impl Factors {
    fn new(k: &DMatrix<f64>, tau: &DVector<f64>) -> Result<Self> {
        let n = k.nrows();
        let sqrt_tau = tau.map(|t| t.max(0.0).sqrt());
        let mut b = DMatrix::identity(n, n);
        for j in 0..n {
            for i in 0..n {
                b[(i, j)] += sqrt_tau[i] * k[(i, j)] * sqrt_tau[j];
            }
        }
        let chol = Cholesky::new(b).ok_or_else(|| {
            Error::Numerical("posterior factor I + S^1/2 K S^1/2 is not positive definite; Gram matrix is not PSD after jitter".into())
        })?;
        Ok(Self { chol, sqrt_tau })
    }

    /// Solves `B x = b`.
    fn solve_b(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Posterior covariance `Σ = K - Vᵀ V`, `V = L⁻¹ S^½ K`.
    fn covariance(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        let mut v = k.clone();
        for j in 0..v.ncols() {
            for i in 0..v.nrows() {
                v[(i, j)] *= self.sqrt_tau[i];
            }
        }
        let l = self.chol.l_dirty();
        l.solve_lower_triangular_mut(&mut v);
        let mut sigma = k.clone();
        sigma.gemm_tr(-1.0, &v, &v, 1.0);
        // symmetrize the floating-point result
        let n = sigma.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                let avg = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
                sigma[(i, j)] = avg;
                sigma[(j, i)] = avg;
            }
        }
        sigma
    }

    fn alpha(&self, k: &DMatrix<f64>, nu: &DVector<f64>) -> DVector<f64> {
        let k_nu = k * nu;
        let scaled = k_nu.component_mul(&self.sqrt_tau);
        let solved = self.solve_b(&scaled);
        nu - solved.component_mul(&self.sqrt_tau)
    }

    fn log_det_b(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `S^½ B⁻¹ S^½`.
    fn whitened_inverse(&self) -> DMatrix<f64> {
        let mut inv = self.chol.inverse();
        let n = inv.nrows();
        for j in 0..n {
            for i in 0..n {
                inv[(i, j)] *= self.sqrt_tau[i] * self.sqrt_tau[j];
            }
        }
        inv
    }
}

/// Moment-matched site parameters for a probit likelihood given the cavity.
///
/// Returns `(τ̃, ν̃, log Z_i)` where `Z_i` is the tilted normaliser.
pub fn probit_site_update(label: f64, cavity_precision: f64, cavity_location: f64) -> (f64, f64, f64) {
    let var = 1.0 / cavity_precision;
    let mean = cavity_location * var;
    let denom = (1.0 + var).sqrt();
    let z = label * mean / denom;
    let ratio = inverse_mills_ratio(z);
    let hat_mean = mean + label * var * ratio / denom;
    let hat_var = var - var * var * ratio / (1.0 + var) * (z + ratio);
    let site_precision = (1.0 / hat_var - cavity_precision).max(0.0);
    let site_location = hat_mean / hat_var - cavity_location;
    (site_precision, site_location, log_probit(z))
}

/// Tilted-distribution moments `(Z, mean, variance)` of `N(f|m, v) Φ(y f)`.
pub fn tilted_moments(label: f64, cavity_mean: f64, cavity_var: f64) -> (f64, f64, f64) {
    let denom = (1.0 + cavity_var).sqrt();
    let z = label * cavity_mean / denom;
    let ratio = inverse_mills_ratio(z);
    let mean = cavity_mean + label * cavity_var * ratio / denom;
    let var = cavity_var - cavity_var * cavity_var * ratio / (1.0 + cavity_var) * (z + ratio);
    (probit(z), mean, var)
}

/// Runs EP from zero sites.
pub fn ep_fit(data: &BinaryDataset, kernel: &KernelSpec, cfg: &FitConfig) -> Result<EpState> {
    ep_fit_from(data, kernel, cfg, None)
}

/// Runs EP, optionally warm-started from previous site parameters.
pub fn ep_fit_from(
    data: &BinaryDataset,
    kernel: &KernelSpec,
    cfg: &FitConfig,
    init: Option<&EpSites>,
) -> Result<EpState> {
    cfg.validate()?;
    let k = gram_matrix(data.inputs(), kernel, cfg.jitter)?;
    ep_fit_gram(&k, data.labels(), cfg, init)
}

/// EP on an explicit covariance matrix.
pub fn ep_fit_gram(k: &DMatrix<f64>, labels: &[i8], cfg: &FitConfig, init: Option<&EpSites>) -> Result<EpState> {
    let n = labels.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::InvalidInput("covariance size does not match label count".into()));
    }
    let (mut tau, mut nu) = match init {
        Some(sites) if sites.precision.len() == n && sites.location.len() == n => (
            DVector::from_vec(sites.precision.clone()),
            DVector::from_vec(sites.location.clone()),
        ),
        Some(_) => return Err(Error::InvalidInput("warm-start sites have the wrong length".into())),
        None => (DVector::zeros(n), DVector::zeros(n)),
    };
    let labels: Vec<f64> = labels.iter().map(|&y| f64::from(y)).collect();

    let factors = Factors::new(k, &tau)?;
    let mut sigma = factors.covariance(k);
    let mut mu = &sigma * &nu;

    let mut converged = false;
    let mut sweeps = 0;
    let mut skipped = 0;
    let mut last_change = f64::INFINITY;
    while sweeps < cfg.ep_max_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for i in 0..n {
            let s_ii = sigma[(i, i)];
            let cavity_precision = 1.0 / s_ii - tau[i];
            let cavity_location = mu[i] / s_ii - nu[i];
            if !(cavity_precision > 0.0 && cavity_precision.is_finite()) {
                skipped += 1;
                continue;
            }
            let (fresh_tau, fresh_nu, _) = probit_site_update(labels[i], cavity_precision, cavity_location);
            let new_tau = (cfg.damping * fresh_tau + (1.0 - cfg.damping) * tau[i]).max(0.0);
            let new_nu = cfg.damping * fresh_nu + (1.0 - cfg.damping) * nu[i];
            let delta_tau = new_tau - tau[i];
            let delta_nu = new_nu - nu[i];
            if !(delta_tau.is_finite() && delta_nu.is_finite()) {
                return Err(Error::Numerical(format!("non-finite site update at index {i}")));
            }
            max_change = max_change.max(delta_tau.abs()).max(delta_nu.abs());
            tau[i] = new_tau;
            nu[i] = new_nu;
            if delta_tau != 0.0 {
                let column = sigma.column(i).clone_owned();
                let c = delta_tau / (1.0 + delta_tau * s_ii);
                sigma.ger(-c, &column, &column, 1.0);
            }
            mu = &sigma * &nu;
        }
        let factors = Factors::new(k, &tau)?;
        sigma = factors.covariance(k);
        mu = &sigma * &nu;
        last_change = max_change;
        if max_change < cfg.ep_tolerance {
            converged = true;
            break;
        }
    }

    let factors = Factors::new(k, &tau)?;
    let sigma = factors.covariance(k);
    let sigma_diag: Vec<f64> = sigma.diagonal().iter().copied().collect();
    let log_evidence = log_evidence(factors.log_det_b(), &sigma_diag, &(&sigma * &nu), &tau, &nu, &labels)?;
    let alpha = factors.alpha(k, &nu);
    Ok(EpState {
        posterior_cholesky: factors.lower(),
        sqrt_precision: factors.sqrt_tau,
        alpha,
        site_precision: tau,
        site_location: nu,
        log_evidence,
        converged,
        sweeps_used: sweeps,
        last_change,
        skipped_updates: skipped,
        jitter: cfg.jitter,
    })
}

/// EP approximation of log p(y | X) for the current sites, given
/// `log |I + S^½ K S^½|`, the posterior marginal variances and mean.
pub(super) fn log_evidence(
    log_det_b: f64,
    sigma_diag: &[f64],
    mu: &DVector<f64>,
    tau: &DVector<f64>,
    nu: &DVector<f64>,
    labels: &[f64],
) -> Result<f64> {
    let n = labels.len();
    let mut total = -0.5 * log_det_b + 0.5 * nu.dot(mu);
    for i in 0..n {
        let s_ii = sigma_diag[i];
        if s_ii == 0.0 && tau[i] == 0.0 {
            // latent pinned at zero: the likelihood factor is Φ(0)
            total += log_probit(0.0);
            continue;
        }
        let tau_cav = 1.0 / s_ii - tau[i];
        let nu_cav = mu[i] / s_ii - nu[i];
        if !(tau_cav > 0.0) {
            return Err(Error::Numerical(format!(
                "non-positive cavity precision at site {i} while computing evidence"
            )));
        }
        let z = labels[i] * (nu_cav / tau_cav) / (1.0 + 1.0 / tau_cav).sqrt();
        total += log_probit(z);
        total += 0.5 * nu_cav * ((tau[i] / tau_cav * nu_cav - 2.0 * nu[i]) / (tau[i] + tau_cav));
        total -= 0.5 * nu[i] * nu[i] / (tau_cav + tau[i]);
        total += 0.5 * (tau[i] / tau_cav).ln_1p();
    }
    if !total.is_finite() {
        return Err(Error::Numerical("log evidence is not finite".into()));
    }
    Ok(total)
}

impl EpState {
    /// Rebuilds the posterior factors from stored sites without running EP.
    pub fn from_sites(
        data: &BinaryDataset,
        kernel: &KernelSpec,
        sites: &EpSites,
        jitter: f64,
        meta: EpMeta,
    ) -> Result<Self> {
        let n = data.len();
        if sites.precision.len() != n || sites.location.len() != n {
            return Err(Error::InvalidInput("stored sites do not match the training data".into()));
        }
        let k = gram_matrix(data.inputs(), kernel, jitter)?;
        let tau = DVector::from_vec(sites.precision.clone());
        let nu = DVector::from_vec(sites.location.clone());
        let factors = Factors::new(&k, &tau)?;
        let alpha = factors.alpha(&k, &nu);
        Ok(EpState {
            posterior_cholesky: factors.lower(),
            sqrt_precision: factors.sqrt_tau,
            alpha,
            site_precision: tau,
            site_location: nu,
            log_evidence: meta.log_evidence,
            converged: meta.converged,
            sweeps_used: meta.sweeps_used,
            last_change: meta.last_change,
            skipped_updates: meta.skipped_updates,
            jitter,
        })
    }

    pub fn sites(&self) -> EpSites {
        EpSites {
            precision: self.site_precision.iter().copied().collect(),
            location: self.site_location.iter().copied().collect(),
        }
    }

    pub fn meta(&self) -> EpMeta {
        EpMeta {
            log_evidence: self.log_evidence,
            converged: self.converged,
            sweeps_used: self.sweeps_used,
            last_change: self.last_change,
            skipped_updates: self.skipped_updates,
        }
    }

    /// Posterior mean and covariance of the training latents.
    pub fn posterior_moments(&self, data: &BinaryDataset, kernel: &KernelSpec) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let k = gram_matrix(data.inputs(), kernel, self.jitter)?;
        let factors = Factors::new(&k, &self.site_precision)?;
        let sigma = factors.covariance(&k);
        let mu = &sigma * &self.site_location;
        Ok((mu, sigma))
    }
}

/// Scalar diagnostics stored next to the sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpMeta {
    pub log_evidence: f64,
    pub converged: bool,
    pub sweeps_used: usize,
    pub last_change: f64,
    pub skipped_updates: usize,
}

/// Gradient of the EP log evidence with respect to the unconstrained
/// hyperparameters, holding the site parameters fixed.
pub fn log_evidence_gradient(state: &EpState, data: &BinaryDataset, kernel: &KernelSpec) -> Result<Vec<f64>> {
    let k = gram_matrix(data.inputs(), kernel, state.jitter)?;
    let factors = Factors::new(&k, &state.site_precision)?;
    let alpha = factors.alpha(&k, &state.site_location);
    let mut weights = factors.whitened_inverse();
    weights.ger(1.0, &alpha, &alpha, -1.0);
    let contracted = kernel.contract_gradient(data.inputs(), &weights)?;
    Ok(contracted.into_iter().map(|g| 0.5 * g).collect())
}

/// Latent predictive moments and class probability for one test input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predictive {
    pub mean: f64,
    pub variance: f64,
    pub probability: f64,
    /// Set when the computed variance was negative and clamped to the jitter.
    pub variance_clamped: bool,
}

/// `p(y* = +1 | X, y, x*) = Φ(μ* / sqrt(1 + s*²))`.
pub fn predict_probability(
    state: &EpState,
    data: &BinaryDataset,
    kernel: &KernelSpec,
    test: &TaskedInput,
) -> Result<Predictive> {
    let k_star = kernel.cross_covariance(data.inputs(), test)?;
    let k_ss = kernel.eval(test, test)?;
    let mean = k_star.dot(&state.alpha);
    let mut v = k_star.component_mul(&state.sqrt_precision);
    state.posterior_cholesky.solve_lower_triangular_mut(&mut v);
    let mut variance = k_ss - v.dot(&v);
    let mut variance_clamped = false;
    if variance < 0.0 {
        variance = state.jitter;
        variance_clamped = true;
    }
    let probability = probit(mean / (1.0 + variance).sqrt());
    Ok(Predictive {
        mean,
        variance,
        probability,
        variance_clamped,
    })
}
