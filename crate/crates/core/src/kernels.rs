//! Covariance functions over sparse count vectors.
//!
//! Two families are supported: the linear data kernel `σ² xᵀx'` and the
//! intrinsic coregionalisation model (ICM), which multiplies the data kernel
//! by a task covariance `B = diag(κ) + v vᵀ` indexed by the task ids of the
//! two inputs.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::SparseFeatureVector;

pub const DEFAULT_JITTER: f64 = 1e-8;

/// Gram matrices at least this large are assembled row-parallel.
const PARALLEL_GRAM_ROWS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearKernelParams {
    pub signal_variance: f64,
}

impl LinearKernelParams {
    pub fn new(signal_variance: f64) -> Result<Self> {
        let p = Self { signal_variance };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "signal variance must be positive and finite, got {}",
                self.signal_variance
            )));
        }
        Ok(())
    }
}

impl Default for LinearKernelParams {
    fn default() -> Self {
        Self {
            signal_variance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcmKernelParams {
    pub data_kernel: LinearKernelParams,
    pub task_count: usize,
    pub kappa: Vec<f64>,
    pub v: Vec<f64>,
}

impl IcmKernelParams {
    pub fn new(
        data_kernel: LinearKernelParams,
        kappa: Vec<f64>,
        v: Vec<f64>,
    ) -> Result<Self> {
        let p = Self {
            data_kernel,
            task_count: kappa.len(),
            kappa,
            v,
        };
        p.validate()?;
        Ok(p)
    }

    /// Block-diagonal start: κ = 1, v = 0.
    pub fn independent(task_count: usize, signal_variance: f64) -> Result<Self> {
        Self::new(
            LinearKernelParams::new(signal_variance)?,
            vec![1.0; task_count],
            vec![0.0; task_count],
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.data_kernel.validate()?;
        if self.task_count == 0 {
            return Err(Error::InvalidInput("ICM kernel needs at least one task".into()));
        }
        if self.kappa.len() != self.task_count || self.v.len() != self.task_count {
            return Err(Error::InvalidInput(format!(
                "ICM kernel with {} tasks got {} kappa and {} v entries",
                self.task_count,
                self.kappa.len(),
                self.v.len()
            )));
        }
        if self.kappa.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
            return Err(Error::InvalidInput("kappa entries must be finite and >= 0".into()));
        }
        if self.v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("v entries must be finite".into()));
        }
        Ok(())
    }

    /// `B[a][b] = κ_a δ_ab + v_a v_b`.
    pub fn coregionalisation_entry(&self, a: usize, b: usize) -> f64 {
        let diag = if a == b { self.kappa[a] } else { 0.0 };
        diag + self.v[a] * self.v[b]
    }

    pub fn coregionalisation(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.task_count, self.task_count, |a, b| {
            self.coregionalisation_entry(a, b)
        })
    }

    fn check_task(&self, task: usize) -> Result<()> {
        if task >= self.task_count {
            return Err(Error::TaskOutOfRange {
                task,
                task_count: self.task_count,
            });
        }
        Ok(())
    }
}

/// Kernel family plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear(LinearKernelParams),
    Icm(IcmKernelParams),
}

/// A feature vector tagged with the task it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskedInput {
    pub features: SparseFeatureVector,
    pub task_id: usize,
}

impl TaskedInput {
    pub fn new(features: SparseFeatureVector, task_id: usize) -> Self {
        Self { features, task_id }
    }

    pub fn single_task(features: SparseFeatureVector) -> Self {
        Self::new(features, 0)
    }
}

pub fn linear_kernel(a: &SparseFeatureVector, b: &SparseFeatureVector, p: &LinearKernelParams) -> f64 {
    p.signal_variance * a.dot(b)
}

pub fn icm_kernel(a: &TaskedInput, b: &TaskedInput, p: &IcmKernelParams) -> Result<f64> {
    p.check_task(a.task_id)?;
    p.check_task(b.task_id)?;
    Ok(linear_kernel(&a.features, &b.features, &p.data_kernel)
        * p.coregionalisation_entry(a.task_id, b.task_id))
}

impl KernelSpec {
    pub fn linear(signal_variance: f64) -> Result<Self> {
        Ok(KernelSpec::Linear(LinearKernelParams::new(signal_variance)?))
    }

    pub fn task_count(&self) -> usize {
        match self {
            KernelSpec::Linear(_) => 1,
            KernelSpec::Icm(p) => p.task_count,
        }
    }

    pub fn signal_variance(&self) -> f64 {
        match self {
            KernelSpec::Linear(p) => p.signal_variance,
            KernelSpec::Icm(p) => p.data_kernel.signal_variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Linear(p) => p.validate(),
            KernelSpec::Icm(p) => p.validate(),
        }
    }

    /// Checks that every input's task id is valid for this kernel.
    pub fn check_inputs(&self, inputs: &[TaskedInput]) -> Result<()> {
        if let KernelSpec::Icm(p) = self {
            for input in inputs {
                p.check_task(input.task_id)?;
            }
        }
        Ok(())
    }

    /// Evaluates the kernel. The linear family ignores task ids.
    pub fn eval(&self, a: &TaskedInput, b: &TaskedInput) -> Result<f64> {
        match self {
            KernelSpec::Linear(p) => Ok(linear_kernel(&a.features, &b.features, p)),
            KernelSpec::Icm(p) => icm_kernel(a, b, p),
        }
    }

    /// Task-covariance factor between two task ids (1 for the linear family).
    fn task_factor(&self, a: usize, b: usize) -> f64 {
        match self {
            KernelSpec::Linear(_) => 1.0,
            KernelSpec::Icm(p) => p.coregionalisation_entry(a, b),
        }
    }

    /// Kernel column between the training inputs and a single test input.
    pub fn cross_covariance(&self, inputs: &[TaskedInput], test: &TaskedInput) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(inputs.len());
        for (slot, input) in out.iter_mut().zip(inputs) {
            *slot = self.eval(input, test)?;
        }
        Ok(out)
    }

    /// Number of unconstrained hyperparameters.
    pub fn parameter_count(&self) -> usize {
        match self {
            KernelSpec::Linear(_) => 1,
            KernelSpec::Icm(p) => 1 + 2 * p.task_count,
        }
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = vec!["log_signal_variance".to_string()];
        if let KernelSpec::Icm(p) = self {
            names.extend((0..p.task_count).map(|d| format!("log_kappa[{d}]")));
            names.extend((0..p.task_count).map(|d| format!("v[{d}]")));
        }
        names
    }

    /// Unconstrained coordinates `(log σ², log κ.., v..)`.
    ///
    /// A κ entry of exactly zero maps to `ln(MIN_KAPPA)`.
    pub fn to_unconstrained(&self) -> Vec<f64> {
        match self {
            KernelSpec::Linear(p) => vec![p.signal_variance.ln()],
            KernelSpec::Icm(p) => {
                let mut theta = Vec::with_capacity(self.parameter_count());
                theta.push(p.data_kernel.signal_variance.ln());
                theta.extend(p.kappa.iter().map(|k| k.max(MIN_KAPPA).ln()));
                theta.extend(p.v.iter().copied());
                theta
            }
        }
    }

    /// Inverse of [`KernelSpec::to_unconstrained`]; keeps the family and task count of `self`.
    pub fn from_unconstrained(&self, theta: &[f64]) -> Result<KernelSpec> {
        if theta.len() != self.parameter_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} hyperparameters, got {}",
                self.parameter_count(),
                theta.len()
            )));
        }
        let spec = match self {
            KernelSpec::Linear(_) => KernelSpec::Linear(LinearKernelParams {
                signal_variance: theta[0].exp(),
            }),
            KernelSpec::Icm(p) => {
                let d = p.task_count;
                KernelSpec::Icm(IcmKernelParams {
                    data_kernel: LinearKernelParams {
                        signal_variance: theta[0].exp(),
                    },
                    task_count: d,
                    kappa: theta[1..=d].iter().map(|t| t.exp()).collect(),
                    v: theta[d + 1..].to_vec(),
                })
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Returns `Σ_ij W_ij ∂K_ij/∂θ_k` for every unconstrained coordinate θ_k,
    /// where `W` is symmetric. Jitter does not depend on θ.
    pub fn contract_gradient(&self, inputs: &[TaskedInput], weights: &DMatrix<f64>) -> Result<Vec<f64>> {
        let n = inputs.len();
        if weights.nrows() != n || weights.ncols() != n {
            return Err(Error::InvalidInput("gradient weights must be n x n".into()));
        }
        self.check_inputs(inputs)?;
        let tasks = self.task_count();
        let sigma2 = self.signal_variance();
        // per task-pair totals of W_ij σ² x_iᵀx_j
        let mut totals = DMatrix::<f64>::zeros(tasks, tasks);
        let task = |i: usize| if tasks == 1 { 0 } else { inputs[i].task_id };
        for i in 0..n {
            for j in i..n {
                let data = inputs[i].features.dot(&inputs[j].features);
                if data == 0.0 {
                    continue;
                }
                let (a, b) = (task(i), task(j));
                totals[(a, b)] += weights[(i, j)] * sigma2 * data;
                if i != j {
                    totals[(b, a)] += weights[(j, i)] * sigma2 * data;
                }
            }
        }
        let mut grad = Vec::with_capacity(self.parameter_count());
        let mut total = 0.0;
        for a in 0..tasks {
            for b in 0..tasks {
                total += totals[(a, b)] * self.task_factor(a, b);
            }
        }
        grad.push(total);
        if let KernelSpec::Icm(p) = self {
            for d in 0..tasks {
                grad.push(totals[(d, d)] * p.kappa[d]);
            }
            for d in 0..tasks {
                let mut g = 0.0;
                for b in 0..tasks {
                    g += (totals[(d, b)] + totals[(b, d)]) * p.v[b];
                }
                grad.push(g);
            }
        }
        Ok(grad)
    }
}

/// Smallest κ representable in log space.
pub const MIN_KAPPA: f64 = 1e-12;

/// Assembles `K[i][j] = kernel(inputs[i], inputs[j])` plus `jitter` on the
/// diagonal. Only the upper triangle is evaluated, then mirrored, so the
/// result is exactly symmetric.
pub fn gram_matrix(inputs: &[TaskedInput], spec: &KernelSpec, jitter: f64) -> Result<DMatrix<f64>> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("gram matrix needs at least one input".into()));
    }
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::InvalidInput(format!("jitter must be >= 0, got {jitter}")));
    }
    spec.validate()?;
    spec.check_inputs(inputs)?;
    let n = inputs.len();
    let row = |i: usize| -> Vec<f64> {
        (i..n)
            .map(|j| {
                let a = &inputs[i];
                let b = &inputs[j];
                a.features.dot(&b.features) * spec.signal_variance() * spec.task_factor(a.task_id, b.task_id)
            })
            .collect()
    };
    let rows: Vec<Vec<f64>> = if n >= PARALLEL_GRAM_ROWS {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    };
    let mut k = DMatrix::zeros(n, n);
    for (i, values) in rows.into_iter().enumerate() {
        for (offset, value) in values.into_iter().enumerate() {
            let j = i + offset;
            k[(i, j)] = value;
            k[(j, i)] = value;
        }
        k[(i, i)] += jitter;
    }
    Ok(k)
}
