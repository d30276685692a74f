mod oracle;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stancekit::inference::{
    ep_fit, log_evidence_gradient, optimize_hyperparameters, predict_probability, probit, BinaryDataset, FitConfig,
    OptimizerConfig,
};
use stancekit::kernels::{IcmKernelParams, KernelSpec, LinearKernelParams, TaskedInput};
use stancekit::text::SparseFeatureVector;

fn input(values: &[u32], task: usize) -> TaskedInput {
    TaskedInput::new(SparseFeatureVector::from_dense(values), task)
}

fn tight() -> FitConfig {
    FitConfig {
        ep_tolerance: 1e-12,
        ep_max_sweeps: 1000,
        ..FitConfig::default()
    }
}

#[test]
fn probit_matches_series_oracle() {
    let oracle = oracle::normal_cdf(1.959964);
    assert!((oracle - 0.975).abs() < 1e-6);
    assert!((probit(1.959964) - 0.975).abs() < 1e-6);
    for &z in &[-2.5, -1.0, -0.3, 0.0, 0.4, 1.7, 2.9] {
        assert!((probit(z) - oracle::normal_cdf(z)).abs() < 1e-14, "z = {z}");
    }
}

#[test]
fn single_point_matches_gauss_hermite() {
    let data = BinaryDataset::new(vec![input(&[1], 0)], vec![1]).unwrap();
    let kernel = KernelSpec::linear(1.0).unwrap();
    let state = ep_fit(&data, &kernel, &FitConfig::default()).unwrap();
    let pred = predict_probability(&state, &data, &kernel, &input(&[1], 0)).unwrap();

    // exact posterior ∝ N(f; 0, 1) Φ(f), integrated by Gauss–Hermite
    let z = oracle::normal_expectation(80, oracle::phi);
    let mean = oracle::normal_expectation(80, |f| f * oracle::phi(f)) / z;
    let second = oracle::normal_expectation(80, |f| f * f * oracle::phi(f)) / z;
    let var = second - mean * mean;
    // with one site, EP matches the exact posterior moments
    assert!((pred.mean - mean).abs() < 1e-6, "mean {} vs {mean}", pred.mean);
    assert!((pred.variance - var).abs() < 1e-6, "var {} vs {var}", pred.variance);

    // the predictive integral over the fitted Gaussian, by quadrature
    let sd = pred.variance.sqrt();
    let gaussian = oracle::normal_expectation(80, |u| oracle::phi(pred.mean + sd * u));
    assert!((pred.probability - gaussian).abs() < 1e-10);

    // against the exact non-Gaussian posterior the only gap is the Gaussian
    // approximation itself: Φ(0.5642/√1.6817) - 2/3 ≈ 1.58e-3
    let exact = oracle::normal_expectation(80, |f| oracle::phi(f).powi(2)) / z;
    assert!((exact - 2.0 / 3.0).abs() < 1e-12);
    let gap = pred.probability - exact;
    assert!((gap - 1.575e-3).abs() < 1e-5, "EP {} vs exact {exact}", pred.probability);
}

/// Draws small integer feature vectors, rejecting all-zero rows.
fn random_problem(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> (Vec<Vec<u32>>, Vec<i8>) {
    let mut xs = Vec::new();
    while xs.len() < n {
        let x: Vec<u32> = (0..dim).map(|_| rng.gen_range(0..3)).collect();
        if x.iter().any(|&v| v > 0) {
            xs.push(x);
        }
    }
    let ys = (0..n).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
    (xs, ys)
}

fn to_f64(x: &[u32]) -> Vec<f64> {
    x.iter().map(|&v| f64::from(v)).collect()
}

#[test]
fn four_point_problem_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (xs, ys) = random_problem(&mut rng, 4, 2);
    let sigma2 = 1.0;
    let inputs: Vec<TaskedInput> = xs.iter().map(|x| input(x, 0)).collect();
    let data = BinaryDataset::new(inputs, ys.clone()).unwrap();
    let kernel = KernelSpec::linear(sigma2).unwrap();
    let state = ep_fit(&data, &kernel, &FitConfig::default()).unwrap();
    let dense: Vec<Vec<f64>> = xs.iter().map(|x| to_f64(x)).collect();
    for test in [[1u32, 0], [0, 2], [2, 1]] {
        let p = predict_probability(&state, &data, &kernel, &input(&test, 0)).unwrap().probability;
        let exact = oracle::linear_probit_predictive(&dense, &ys, sigma2, &to_f64(&test), 60);
        assert!((p - exact).abs() < 2e-2, "test {test:?}: EP {p} vs {exact}");
    }
}

fn six_point_icm() -> (BinaryDataset, KernelSpec) {
    let data = BinaryDataset::new(
        vec![
            input(&[1, 0, 1], 0),
            input(&[2, 1, 0], 1),
            input(&[0, 1, 1], 0),
            input(&[1, 2, 0], 1),
            input(&[0, 0, 2], 0),
            input(&[1, 1, 1], 1),
        ],
        vec![1, 1, -1, -1, 1, -1],
    )
    .unwrap();
    let kernel = KernelSpec::Icm(
        IcmKernelParams::new(LinearKernelParams::new(0.8).unwrap(), vec![0.6, 1.3, 0.9], vec![0.4, -0.2, 0.5]).unwrap(),
    );
    (data, kernel)
}

fn evidence_at(data: &BinaryDataset, template: &KernelSpec, theta: &[f64]) -> f64 {
    let kernel = template.from_unconstrained(theta).unwrap();
    ep_fit(data, &kernel, &tight()).unwrap().log_evidence
}

#[test]
fn evidence_gradient_matches_finite_differences() {
    let (data, kernel) = six_point_icm();
    let state = ep_fit(&data, &kernel, &tight()).unwrap();
    let grad = log_evidence_gradient(&state, &data, &kernel).unwrap();
    let theta = kernel.to_unconstrained();
    for k in 0..theta.len() {
        let fd = oracle::central_difference(|t| evidence_at(&data, &kernel, t), &theta, k, 1e-5);
        let rel = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1e-6);
        assert!(rel < 1e-4, "{}: analytic {} vs fd {fd}", kernel.parameter_names()[k], grad[k]);
    }
}

#[test]
fn unused_task_has_zero_kappa_gradient() {
    // task 2 owns no data
    let (data, kernel) = six_point_icm();
    let state = ep_fit(&data, &kernel, &tight()).unwrap();
    let grad = log_evidence_gradient(&state, &data, &kernel).unwrap();
    assert!(grad[3].abs() < 1e-8, "log_kappa[2] gradient {}", grad[3]);
    assert!(grad[6].abs() < 1e-8, "v[2] gradient {}", grad[6]);
}

#[test]
fn v_derivative_vanishes_at_zero_for_one_task() {
    let data = BinaryDataset::new(vec![input(&[1, 0], 0), input(&[0, 1], 0), input(&[1, 1], 0)], vec![1, -1, 1]).unwrap();
    let kernel = KernelSpec::Icm(IcmKernelParams::new(LinearKernelParams::new(1.0).unwrap(), vec![1.0], vec![0.0]).unwrap());
    let state = ep_fit(&data, &kernel, &tight()).unwrap();
    let grad = log_evidence_gradient(&state, &data, &kernel).unwrap();
    assert!(grad[2].abs() < 1e-12);
    let plus = KernelSpec::Icm(IcmKernelParams::new(LinearKernelParams::new(1.0).unwrap(), vec![1.0], vec![0.7]).unwrap());
    let minus = KernelSpec::Icm(IcmKernelParams::new(LinearKernelParams::new(1.0).unwrap(), vec![1.0], vec![-0.7]).unwrap());
    let a = ep_fit(&data, &plus, &tight()).unwrap().log_evidence;
    let b = ep_fit(&data, &minus, &tight()).unwrap().log_evidence;
    assert_eq!(a, b);
}

#[test]
fn permutation_leaves_predictions_unchanged() {
    let xs = [[1u32, 0, 2], [2, 1, 0], [0, 1, 1], [1, 2, 0], [0, 0, 2], [3, 1, 1]];
    let ys = [1i8, 1, -1, -1, 1, -1];
    let kernel = KernelSpec::linear(0.9).unwrap();
    let order = [4usize, 0, 5, 2, 1, 3];
    let data = BinaryDataset::new(xs.iter().map(|x| input(x, 0)).collect(), ys.to_vec()).unwrap();
    let shuffled = BinaryDataset::new(
        order.iter().map(|&i| input(&xs[i], 0)).collect(),
        order.iter().map(|&i| ys[i]).collect(),
    )
    .unwrap();
    let a = ep_fit(&data, &kernel, &tight()).unwrap();
    let b = ep_fit(&shuffled, &kernel, &tight()).unwrap();
    for test in [[1u32, 1, 1], [0, 3, 0], [2, 0, 0]] {
        let pa = predict_probability(&a, &data, &kernel, &input(&test, 0)).unwrap().probability;
        let pb = predict_probability(&b, &shuffled, &kernel, &input(&test, 0)).unwrap().probability;
        assert!((pa - pb).abs() < 1e-10, "{pa} vs {pb}");
    }
}

#[test]
fn identical_tasks_learn_positive_correlation() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    // 10 points per task; task 1 repeats task 0 exactly
    let mut base = Vec::new();
    while base.len() < 10 {
        let x: Vec<u32> = (0..3).map(|_| rng.gen_range(0..3)).collect();
        if x.iter().any(|&v| v > 0) {
            let score = f64::from(x[0]) - f64::from(x[1]) + 0.3 * (f64::from(x[2]) - 1.0);
            base.push((x, if score >= 0.0 { 1i8 } else { -1 }));
        }
    }
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for task in 0..2 {
        for (x, y) in &base {
            inputs.push(input(x, task));
            labels.push(*y);
        }
    }
    let data = BinaryDataset::new(inputs, labels).unwrap();
    let init = KernelSpec::Icm(IcmKernelParams::independent(2, 1.0).unwrap());
    let out = optimize_hyperparameters(
        &data,
        &init,
        &FitConfig::default(),
        &OptimizerConfig {
            max_iters: 50,
            restarts: 3,
            seed: 7,
        },
    )
    .unwrap();
    let KernelSpec::Icm(p) = &out.kernel else { panic!("family changed") };
    let b = p.coregionalisation();
    let corr = b[(0, 1)] / (b[(0, 0)] * b[(1, 1)]).sqrt();
    assert!(corr > 0.5, "correlation {corr}, B = {b}");

    // grid-search oracle over (κ, v) at the optimised σ²: the best grid point is also correlated
    let sigma2 = p.data_kernel.signal_variance;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for &k in &[0.05, 0.2, 0.5, 1.0, 2.0] {
        for &v in &[-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
            let spec = KernelSpec::Icm(
                IcmKernelParams::new(LinearKernelParams::new(sigma2).unwrap(), vec![k, k], vec![v, v]).unwrap(),
            );
            let ev = ep_fit(&data, &spec, &FitConfig::default()).unwrap().log_evidence;
            if ev > best.0 {
                best = (ev, v * v / (k + v * v));
            }
        }
    }
    assert!(best.1 > 0.5, "grid optimum correlation {}", best.1);
    assert!(out.log_evidence >= best.0 - 1e-3, "optimiser {} below grid {}", out.log_evidence, best.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn predictions_are_proper_probabilities(
        rows in proptest::collection::vec((proptest::collection::vec(0u32..4, 3), any::<bool>()), 1..8),
        test in proptest::collection::vec(0u32..4, 3),
        log_sigma in -2.0f64..2.0,
    ) {
        let inputs = rows.iter().map(|(x, _)| input(x, 0)).collect();
        let labels = rows.iter().map(|(_, y)| if *y { 1 } else { -1 }).collect();
        let data = BinaryDataset::new(inputs, labels).unwrap();
        let kernel = KernelSpec::linear(log_sigma.exp()).unwrap();
        let state = ep_fit(&data, &kernel, &FitConfig::default()).unwrap();
        let p = predict_probability(&state, &data, &kernel, &input(&test, 0)).unwrap().probability;
        prop_assert!(p > 0.0 && p < 1.0);
        let flipped = data.flipped();
        let fstate = ep_fit(&flipped, &kernel, &FitConfig::default()).unwrap();
        let q = predict_probability(&fstate, &flipped, &kernel, &input(&test, 0)).unwrap().probability;
        prop_assert!((p + q - 1.0).abs() < 1e-10);
    }
}
