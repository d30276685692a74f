//! Reference computations that do not share code paths with the library's
//! EP implementation.

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};

/// Gauss–Hermite nodes and weights for `∫ e^{-x²} g(x) dx` (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mu0 = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Standard normal expectation `E[g(z)]`, z ~ N(0, 1), via Gauss–Hermite.
pub fn normal_expectation(n: usize, g: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_hermite(n);
    let s2 = std::f64::consts::SQRT_2;
    x.iter().zip(&w).map(|(xi, wi)| wi * g(s2 * xi)).sum::<f64>() / std::f64::consts::PI.sqrt()
}

/// erf by its Maclaurin series, summed until terms vanish. Accurate for |x| ≲ 4.
pub fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= -x2 / n;
        let add = term / (2.0 * n + 1.0);
        sum += add;
        if add.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf_series(z / std::f64::consts::SQRT_2))
}

/// Upper tail `1 - Φ(z)` for z > 0 from the Laplace continued fraction.
fn upper_tail(z: f64) -> f64 {
    let mut frac = z;
    for k in (1..=200).rev() {
        frac = z + k as f64 / frac;
    }
    let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    density / frac
}

/// Φ(z): Maclaurin series for |z| ≤ 3, continued fraction beyond.
pub fn phi(z: f64) -> f64 {
    if z > 3.0 {
        1.0 - upper_tail(z)
    } else if z < -3.0 {
        upper_tail(-z)
    } else {
        normal_cdf(z)
    }
}

/// Exact predictive probability of a linear-kernel probit GP, integrating over
/// the weight vector `w ~ N(0, σ² I)` with a tensor Gauss–Hermite rule.
///
/// `f(x) = xᵀw`, so this is the exact posterior predictive of the GP with
/// `k(x, x') = σ² xᵀx'`.
pub fn linear_probit_predictive(
    inputs: &[Vec<f64>],
    labels: &[i8],
    signal_variance: f64,
    test: &[f64],
    nodes: usize,
) -> f64 {
    let dim = test.len();
    assert!(inputs.iter().all(|x| x.len() == dim));
    assert!((1..=3).contains(&dim));
    let (x, w) = gauss_hermite(nodes);
    let scale = (2.0 * signal_variance).sqrt();
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    let total = nodes.pow(dim as u32);
    for flat in 0..total {
        let mut rest = flat;
        let mut weight = 1.0;
        let mut point = [0.0; 3];
        for slot in point.iter_mut().take(dim) {
            let idx = rest % nodes;
            rest /= nodes;
            *slot = scale * x[idx];
            weight *= w[idx];
        }
        let mut likelihood = 1.0;
        for (xi, &yi) in inputs.iter().zip(labels) {
            let f: f64 = xi.iter().zip(&point).map(|(a, b)| a * b).sum();
            likelihood *= phi(f64::from(yi) * f);
        }
        let f_star: f64 = test.iter().zip(&point).map(|(a, b)| a * b).sum();
        numerator += weight * likelihood * phi(f_star);
        denominator += weight * likelihood;
    }
    numerator / denominator
}

/// Central finite difference of `f` along coordinate `k`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, theta: &[f64], k: usize, h: f64) -> f64 {
    let mut up = theta.to_vec();
    up[k] += h;
    let mut down = theta.to_vec();
    down[k] -= h;
    (f(&up) - f(&down)) / (2.0 * h)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
