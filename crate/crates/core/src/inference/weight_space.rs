//! EP in weight space for kernels with an explicit finite feature map.
//!
//! Both kernel families are inner products of sparse features, so
//! `K = Ψ Ψᵀ` with `Ψ` of width `m`. For ICM, write `B = Cᵀ C` with
//! `C = [diag(√κ); vᵀ]`; then `ψ_i = σ (C e_{t_i}) ⊗ x_i` has a private block
//! `σ √κ_t x` and a shared block `σ v_t x`. The posterior over the weights
//! `u ~ N(0, I)` has covariance `(I + Ψᵀ S Ψ)⁻¹`, so a sweep costs `O(n m²)`
//! instead of `O(n³)`.
//!
//! The site updates, damping, skip rule and stopping test are the same as
//! the function-space fit. The diagonal jitter is omitted: it only exists to
//! keep an explicit Gram matrix factorisable.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::ep::{log_evidence, probit_site_update, BinaryDataset, EpMeta, EpSites, FitConfig};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

/// Sparse rows of `Ψ`.
pub(crate) struct FeatureDesign {
    rows: Vec<Vec<(usize, f64)>>,
    width: usize,
}

impl FeatureDesign {
    /// Builds `Ψ`, or `None` when its width is not below the number of
    /// training points (function space is then no more expensive).
    pub(crate) fn build(data: &BinaryDataset, kernel: &KernelSpec) -> Option<Self> {
        let scale = kernel.signal_variance().sqrt();
        let mut rows_raw: Vec<Vec<((usize, u32), f64)>> = Vec::with_capacity(data.len());
        for input in data.inputs() {
            let mut row = Vec::new();
            for &(feature, count) in input.features.entries() {
                let x = scale * f64::from(count);
                match kernel {
                    KernelSpec::Linear(_) => row.push(((0, feature), x)),
                    KernelSpec::Icm(p) => {
                        let t = input.task_id;
                        row.push(((t, feature), p.kappa[t].sqrt() * x));
                        row.push(((p.task_count, feature), p.v[t] * x));
                    }
                }
            }
            row.retain(|(_, value)| *value != 0.0);
            rows_raw.push(row);
        }
        let mut columns: BTreeMap<(usize, u32), usize> = BTreeMap::new();
        for row in &rows_raw {
            for (key, _) in row {
                columns.entry(*key).or_insert(0);
            }
        }
        let width = columns.len();
        if width >= data.len() {
            return None;
        }
        for (i, slot) in columns.values_mut().enumerate() {
            *slot = i;
        }
        let rows = rows_raw
            .into_iter()
            .map(|row| row.into_iter().map(|(key, value)| (columns[&key], value)).collect())
            .collect();
        Some(Self { rows, width })
    }

    fn row_dot(&self, i: usize, v: &DVector<f64>) -> f64 {
        self.rows[i].iter().map(|&(c, x)| x * v[c]).sum()
    }

    /// `Σ_u ψ_i`.
    fn times_row(&self, sigma_u: &DMatrix<f64>, i: usize) -> DVector<f64> {
        let mut out = DVector::zeros(self.width);
        for &(c, x) in &self.rows[i] {
            out.axpy(x, &sigma_u.column(c), 1.0);
        }
        out
    }

    /// `Ψᵀ v`.
    fn transpose_times(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.width);
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, x) in row {
                out[c] += x * v[i];
            }
        }
        out
    }
}

/// Weight posterior for fixed sites.
pub(crate) struct WeightPosterior {
    sigma_u: DMatrix<f64>,
    mean_u: DVector<f64>,
    log_det_b: f64,
}

impl WeightPosterior {
    fn new(design: &FeatureDesign, tau: &DVector<f64>, nu: &DVector<f64>) -> Result<Self> {
        let m = design.width;
        let mut a = DMatrix::<f64>::identity(m, m);
        for (i, row) in design.rows.iter().enumerate() {
            let t = tau[i];
            if t == 0.0 {
                continue;
            }
            for &(c1, x1) in row {
                for &(c2, x2) in row {
                    a[(c1, c2)] += t * x1 * x2;
                }
            }
        }
        let chol = Cholesky::new(a)
            .ok_or_else(|| Error::Numerical("weight-space posterior precision is not positive definite".into()))?;
        let log_det_b = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let sigma_u = chol.inverse();
        let mean_u = &sigma_u * design.transpose_times(nu);
        Ok(Self {
            sigma_u,
            mean_u,
            log_det_b,
        })
    }

    fn marginals(&self, design: &FeatureDesign) -> (Vec<f64>, DVector<f64>) {
        let n = design.rows.len();
        let mut var = Vec::with_capacity(n);
        let mut mean = DVector::zeros(n);
        for i in 0..n {
            let s = design.times_row(&self.sigma_u, i);
            var.push(design.rows[i].iter().map(|&(c, x)| x * s[c]).sum());
            mean[i] = design.row_dot(i, &self.mean_u);
        }
        (var, mean)
    }
}

/// Result of a weight-space fit.
pub(crate) struct WeightSpaceFit {
    pub(crate) sites: EpSites,
    pub(crate) meta: EpMeta,
    posterior: WeightPosterior,
}

pub(crate) fn ep_fit_weight_space(
    design: &FeatureDesign,
    data: &BinaryDataset,
    cfg: &FitConfig,
    init: Option<&EpSites>,
) -> Result<WeightSpaceFit> {
    cfg.validate()?;
    let n = data.len();
    let (mut tau, mut nu) = match init {
        Some(s) if s.precision.len() == n && s.location.len() == n => {
            (DVector::from_vec(s.precision.clone()), DVector::from_vec(s.location.clone()))
        }
        Some(_) => return Err(Error::InvalidInput("warm-start sites have the wrong length".into())),
        None => (DVector::zeros(n), DVector::zeros(n)),
    };
    let labels: Vec<f64> = data.labels().iter().map(|&y| f64::from(y)).collect();

    let mut post = WeightPosterior::new(design, &tau, &nu)?;
    let mut converged = false;
    let mut sweeps = 0;
    let mut skipped = 0;
    let mut last_change = f64::INFINITY;
    while sweeps < cfg.ep_max_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for i in 0..n {
            if design.rows[i].is_empty() {
                // f_i = 0 exactly; the site stays at zero
                continue;
            }
            let s = design.times_row(&post.sigma_u, i);
            let s_ii: f64 = design.rows[i].iter().map(|&(c, x)| x * s[c]).sum();
            let mu_i = design.row_dot(i, &post.mean_u);
            let cavity_precision = 1.0 / s_ii - tau[i];
            let cavity_location = mu_i / s_ii - nu[i];
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
            let c = delta_tau / (1.0 + delta_tau * s_ii);
            // m' = Σ'(h + Δν ψ) with Σ' = Σ - c s sᵀ and sᵀh = μ_i
            post.mean_u.axpy(delta_nu * (1.0 - c * s_ii) - c * mu_i, &s, 1.0);
            if delta_tau != 0.0 {
                post.sigma_u.ger(-c, &s, &s, 1.0);
            }
        }
        post = WeightPosterior::new(design, &tau, &nu)?;
        last_change = max_change;
        if max_change < cfg.ep_tolerance {
            converged = true;
            break;
        }
    }

    let (var, mean) = post.marginals(design);
    let log_evidence = log_evidence(post.log_det_b, &var, &mean, &tau, &nu, &labels)?;
    Ok(WeightSpaceFit {
        sites: EpSites {
            precision: tau.iter().copied().collect(),
            location: nu.iter().copied().collect(),
        },
        meta: EpMeta {
            log_evidence,
            converged,
            sweeps_used: sweeps,
            last_change,
            skipped_updates: skipped,
        },
        posterior: post,
    })
}

/// Evidence gradient for a weight-space fit, same coordinates as
/// [`super::log_evidence_gradient`].
pub(crate) fn weight_space_gradient(
    fit: &WeightSpaceFit,
    design: &FeatureDesign,
    data: &BinaryDataset,
    kernel: &KernelSpec,
) -> Result<Vec<f64>> {
    let n = data.len();
    let tau = &fit.sites.precision;
    let nu = &fit.sites.location;
    let (_, mean) = fit.posterior.marginals(design);
    // α = ν̃ - S μ and S^½ B⁻¹ S^½ = S - S Σ S
    let alpha = DVector::from_iterator(n, (0..n).map(|i| nu[i] - tau[i] * mean[i]));
    let projected: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            if tau[i] == 0.0 {
                DVector::zeros(0)
            } else {
                design.times_row(&fit.posterior.sigma_u, i)
            }
        })
        .collect();
    let mut weights = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let mut w = alpha[i] * alpha[j];
            if tau[i] != 0.0 && tau[j] != 0.0 {
                let sigma_ij: f64 = design.rows[i].iter().map(|&(c, x)| x * projected[j][c]).sum();
                w += tau[i] * tau[j] * sigma_ij;
            }
            if i == j {
                w -= tau[i];
            }
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
    }
    let contracted = kernel.contract_gradient(data.inputs(), &weights)?;
    Ok(contracted.into_iter().map(|g| 0.5 * g).collect())
}
