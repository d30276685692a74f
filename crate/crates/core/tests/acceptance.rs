//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line, then asserts.

mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stancekit::cli::{cmd_run, RunConfig};
use stancekit::corpus::{load_corpus, CorpusFormat, FieldMapping};
use stancekit::evaluation::{score, ConfusionMatrix};
use stancekit::experiments::{build_folds, run_experiment, ExperimentConfig, ExperimentPlan, Method};
use stancekit::inference::{ep_fit, log_evidence_gradient, predict_probability, BinaryDataset, FitConfig};
use stancekit::kernels::{gram_matrix, IcmKernelParams, KernelSpec, LinearKernelParams, TaskedInput};
use stancekit::multiclass::{predict_stance, train_stance_model, MethodVariant, StanceExample, TrainConfig};
use stancekit::synthetic::{generate, BUNDLED_SEED};
use stancekit::text::{filter_retweets, preprocess, BrownClusterTable, Featurizer, LabeledInstance, Resources, SparseFeatureVector};
use stancekit::StanceLabel;

fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    // straight to the stream so the line shows up even when output is captured
    let line = format!("criterion {id} {name}: {} ({detail})\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "criterion {id} {name} failed: {detail}");
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn input(values: &[u32], task: usize) -> TaskedInput {
    TaskedInput::new(SparseFeatureVector::from_dense(values), task)
}

fn nonzero_row(rng: &mut ChaCha8Rng, dim: usize) -> Vec<u32> {
    loop {
        let x: Vec<u32> = (0..dim).map(|_| rng.gen_range(0..3)).collect();
        if x.iter().any(|&v| v > 0) {
            return x;
        }
    }
}

fn tight() -> FitConfig {
    FitConfig {
        ep_tolerance: 1e-12,
        ep_max_sweeps: 2000,
        ..FitConfig::default()
    }
}

#[test]
fn criterion_1_ep_matches_exact_posterior() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut datasets = 0;
    for seed in 0..24u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = 1 + (seed as usize % 5);
        let dim = 1 + (seed as usize / 5) % 3;
        let sigma2 = rng.gen_range(-0.7f64..0.7).exp();
        let xs: Vec<Vec<u32>> = (0..n).map(|_| nonzero_row(&mut rng, dim)).collect();
        let ys: Vec<i8> = (0..n).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
        let data = BinaryDataset::new(xs.iter().map(|x| input(x, 0)).collect(), ys.clone()).unwrap();
        let kernel = KernelSpec::linear(sigma2).unwrap();
        let state = ep_fit(&data, &kernel, &FitConfig::default()).unwrap();
        let dense: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().map(|&v| f64::from(v)).collect()).collect();
        let nodes = [80, 48, 28][dim - 1];
        for _ in 0..3 {
            let test = nonzero_row(&mut rng, dim);
            let p = predict_probability(&state, &data, &kernel, &input(&test, 0)).unwrap().probability;
            let dense_test: Vec<f64> = test.iter().map(|&v| f64::from(v)).collect();
            let exact = oracle::linear_probit_predictive(&dense, &ys, sigma2, &dense_test, nodes);
            worst = worst.max((p - exact).abs());
        }
        datasets += 1;
    }
    let elapsed = started.elapsed();
    let ok = datasets >= 20 && worst < 2e-2 && elapsed < Duration::from_secs(60);
    verdict(
        1,
        "EP vs brute-force posterior",
        ok,
        &format!("{datasets} datasets, max |error| {worst:.2e}, {:.1}s", elapsed.as_secs_f64()),
    );
}

fn random_icm_problem(seed: u64) -> (BinaryDataset, KernelSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
    let tasks = 2 + (seed as usize % 2);
    let per_task = 3 + (seed as usize % 3);
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for t in 0..tasks {
        for _ in 0..per_task {
            inputs.push(input(&nonzero_row(&mut rng, 3), t));
            labels.push(if rng.gen_bool(0.5) { 1 } else { -1 });
        }
    }
    let kappa = (0..tasks).map(|_| rng.gen_range(0.3..2.0)).collect();
    let v = (0..tasks)
        .map(|_| rng.gen_range(0.2..1.2) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let sigma2 = rng.gen_range(0.5..2.0);
    let kernel = KernelSpec::Icm(IcmKernelParams::new(LinearKernelParams::new(sigma2).unwrap(), kappa, v).unwrap());
    (BinaryDataset::new(inputs, labels).unwrap(), kernel)
}

#[test]
fn criterion_2_gradient_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut covered = BTreeSet::new();
    for seed in 0..12 {
        let (data, kernel) = random_icm_problem(seed);
        let state = ep_fit(&data, &kernel, &tight()).unwrap();
        let grad = log_evidence_gradient(&state, &data, &kernel).unwrap();
        let theta = kernel.to_unconstrained();
        let names = kernel.parameter_names();
        let evidence = |t: &[f64]| ep_fit(&data, &kernel.from_unconstrained(t).unwrap(), &tight()).unwrap().log_evidence;
        for k in 0..theta.len() {
            let fd = oracle::central_difference(evidence, &theta, k, 1e-5);
            let rel = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            covered.insert(names[k].split('[').next().unwrap_or_default().to_string());
        }
        checked += 1;
    }
    let ok = checked >= 10 && worst < 1e-4 && covered.len() == 3;
    verdict(
        2,
        "evidence gradient",
        ok,
        &format!("{checked} problems, parameters {covered:?}, max relative error {worst:.2e}"),
    );
}

#[test]
fn criterion_3_gram_matrices_are_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(3000);
    let mut lowest = f64::INFINITY;
    let trials = 1000;
    for _ in 0..trials {
        let tasks = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=25);
        let inputs: Vec<TaskedInput> = (0..n)
            .map(|_| {
                let nnz = rng.gen_range(0..=6);
                let idx: BTreeMap<u32, u32> = (0..nnz).map(|_| (rng.gen_range(0..40), rng.gen_range(1..4))).collect();
                TaskedInput::new(SparseFeatureVector::from_sorted(idx.into_iter().collect()).unwrap(), rng.gen_range(0..tasks))
            })
            .collect();
        let params = IcmKernelParams::new(
            LinearKernelParams::new(rng.gen_range(-3.0f64..3.0).exp()).unwrap(),
            (0..tasks).map(|_| rng.gen_range(0.0..5.0)).collect(),
            (0..tasks).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        )
        .unwrap();
        let k = gram_matrix(&inputs, &KernelSpec::Icm(params), 0.0).unwrap();
        lowest = lowest.min(oracle::min_eigenvalue(&k));
    }
    verdict(
        3,
        "kernel PSD",
        lowest >= -1e-8,
        &format!("{trials} Gram matrices, smallest eigenvalue {lowest:.2e}"),
    );
}

fn brown_featurizer(paths: &str) -> Featurizer {
    let table = BrownClusterTable::parse(paths, Path::new("brown_paths.txt")).unwrap();
    Featurizer::brown(Arc::new(Resources::bundled()), Arc::new(table))
}

#[test]
fn criterion_4_independent_icm_equals_single_task_gp() {
    let corpus = generate(BUNDLED_SEED + 4);
    let featurizer = brown_featurizer(&corpus.brown_paths);
    let (target, other) = ("london-eye", "army-bank");
    let example = |i: &LabeledInstance| StanceExample {
        tweet_id: i.tweet_id.clone(),
        rumour_id: i.rumour_id.clone(),
        features: featurizer.encode(&i.text),
        label: i.label,
    };
    let target_rows: Vec<&LabeledInstance> = corpus.instances.iter().filter(|i| i.rumour_id == target).collect();
    let train: Vec<StanceExample> = target_rows[..30]
        .iter()
        .copied()
        .chain(corpus.instances.iter().filter(|i| i.rumour_id == other))
        .map(example)
        .collect();
    let test: Vec<StanceExample> = target_rows[30..].iter().copied().map(example).collect();

    let fixed = TrainConfig {
        icm_init_kappa: 1.0,
        icm_init_v: 0.0,
        optimizer: stancekit::inference::OptimizerConfig {
            max_iters: 0,
            restarts: 0,
            seed: 1,
        },
        ..TrainConfig::default()
    };
    let icm = train_stance_model(&train, MethodVariant::GpIcm, target, &fixed).unwrap();
    let gp = train_stance_model(&train, MethodVariant::Gp, target, &fixed).unwrap();
    let mut worst: f64 = 0.0;
    for e in &test {
        let a = predict_stance(&icm, e).unwrap();
        let b = predict_stance(&gp, e).unwrap();
        for c in 0..3 {
            worst = worst.max((a.probabilities[c] - b.probabilities[c]).abs());
        }
    }
    verdict(
        4,
        "task-block independence",
        worst < 1e-6 && !test.is_empty(),
        &format!("{} target test tweets x 3 classes, max |difference| {worst:.2e}", test.len()),
    );
}

#[test]
fn criterion_5_evaluation_exactness() {
    use StanceLabel::{Denying as D, Questioning as Q, Supporting as S};
    let mut failures = Vec::new();

    let r = score(&[S, S, D, Q], &[S, D, D, S]).unwrap();
    // P = 1/3, R = 1/2, so F1 = 2/5
    if r.micro.f1 != 0.5 || r.accuracy() != 0.5 || (r.macro_.f1 - 0.4).abs() > 1e-16 {
        failures.push(format!("hand example: micro {} macro {}", r.micro.f1, r.macro_.f1));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5000);
    for set in 0..100 {
        let n = rng.gen_range(1..200);
        let truths: Vec<StanceLabel> = (0..n).map(|_| StanceLabel::ALL[rng.gen_range(0..3)]).collect();
        let preds: Vec<StanceLabel> = (0..n).map(|_| StanceLabel::ALL[rng.gen_range(0..3)]).collect();
        let hits = truths.iter().zip(&preds).filter(|(a, b)| a == b).count();
        let accuracy = hits as f64 / n as f64;
        let r = score(&truths, &preds).unwrap();
        if r.micro.f1 != accuracy {
            failures.push(format!("set {set}: micro-F1 {} vs accuracy {accuracy}", r.micro.f1));
        }
    }

    // 177 supporting, 0 denying, 13 questioning
    let m = ConfusionMatrix {
        counts: [[170, 2, 5], [0, 0, 0], [3, 0, 10]],
    };
    let truths: Vec<StanceLabel> = (0..3)
        .flat_map(|t| (0..3).flat_map(move |p| std::iter::repeat_n(StanceLabel::ALL[t], m.counts[t][p] as usize)))
        .collect();
    let preds: Vec<StanceLabel> = (0..3)
        .flat_map(|t| (0..3).flat_map(move |p| std::iter::repeat_n(StanceLabel::ALL[p], m.counts[t][p] as usize)))
        .collect();
    let r = score(&truths, &preds).unwrap();
    let f1 = |p: f64, r: f64| 2.0 * p * r / (p + r);
    let (ps, rs) = (170.0 / 173.0, 170.0 / 177.0);
    let (pq, rq) = (10.0 / 15.0, 10.0 / 13.0);
    let expected = [(ps, rs, f1(ps, rs)), (0.0, 0.0, 0.0), (pq, rq, f1(pq, rq))];
    for (c, (p, rc, f)) in expected.iter().enumerate() {
        let s = r.per_class[c];
        if s.precision != *p || s.recall != *rc || (s.f1 - f).abs() > 1e-15 {
            failures.push(format!("class {c}: {s:?}"));
        }
    }
    let macro_p = (ps + 0.0 + pq) / 3.0;
    let macro_r = (rs + 0.0 + rq) / 3.0;
    if truths.len() != 190 || r.micro.f1 != 180.0 / 190.0 || (r.macro_.f1 - f1(macro_p, macro_r)).abs() > 1e-15 {
        failures.push(format!("zero-denying pooled: micro {} macro {}", r.micro.f1, r.macro_.f1));
    }
    let flagged: BTreeSet<&str> = r.undefined.iter().map(String::as_str).collect();
    if flagged != BTreeSet::from(["recall:denying", "f1:denying"]) {
        failures.push(format!("0/0 flags {flagged:?}"));
    }

    verdict(
        5,
        "evaluation exactness",
        failures.is_empty(),
        &if failures.is_empty() {
            "macro-F1 0.4 example, 100 random sets, 177/0/13 fixture".to_string()
        } else {
            failures.join("; ")
        },
    );
}

#[test]
fn criterion_6_harness_structure() {
    let corpus = load_corpus(
        &data_dir().join("synthetic/corpus.jsonl"),
        CorpusFormat::Jsonl,
        &FieldMapping::default(),
        false,
    )
    .unwrap()
    .instances;
    let featurizer = brown_featurizer(&std::fs::read_to_string(data_dir().join("synthetic/brown_paths.txt")).unwrap());
    let mut plan = ExperimentPlan::lpo_sweep(Method::ALL.to_vec());
    plan.seed = 11;
    let mut cfg = ExperimentConfig::default();
    cfg.train.optimizer.max_iters = 10;
    cfg.train.optimizer.restarts = 0;

    let first = run_experiment(&corpus, &plan, &cfg, &featurizer).unwrap();
    let second = run_experiment(&corpus, &plan, &cfg, &featurizer).unwrap();
    let mut problems = Vec::new();

    let units: BTreeSet<&str> = corpus.iter().map(|i| i.rumour_id.as_str()).collect();
    if units.len() != 7 || first.test_sets.len() != 7 || !first.skipped_folds.is_empty() {
        problems.push(format!("{} units, {} folds", units.len(), first.test_sets.len()));
    }
    let expected: BTreeSet<(Method, usize)> = Method::ALL
        .iter()
        .flat_map(|&m| plan.target_train_sizes.iter().map(move |&k| (m, k)))
        .filter(|&(m, k)| m.applies_at(k))
        .collect();
    let grid: BTreeSet<(Method, usize)> = first.grid().into_iter().collect();
    if grid != expected {
        problems.push("method x k grid incomplete".into());
    }
    for m in [Method::Gp, Method::GpIcm] {
        if first.aggregate(m, 0).is_some() {
            problems.push(format!("{m} present at k=0"));
        }
    }
    if first.aggregates.iter().any(|a| a.folds != 7) {
        problems.push("an aggregate is missing folds".into());
    }

    // test sets: same ids for every k, never in training, and fully scored
    let folds = build_folds(&corpus, &plan).unwrap();
    for (fold, (unit, ids)) in folds.folds.iter().zip(&first.test_sets) {
        let from_folds: Vec<&str> = fold.test().iter().map(|&i| corpus[i].tweet_id.as_str()).collect();
        if &fold.unit != unit || from_folds != ids.iter().map(String::as_str).collect::<Vec<_>>() {
            problems.push(format!("fold {unit}: test ids differ"));
        }
        for &k in &plan.target_train_sizes {
            let train: BTreeSet<usize> = fold.train(k).into_iter().collect();
            if fold.test().iter().any(|i| train.contains(i)) {
                problems.push(format!("fold {unit} k={k}: test leaks into training"));
            }
        }
        for r in first.fold_results.iter().filter(|r| &r.fold == unit) {
            if r.confusion.total() as usize != ids.len() {
                problems.push(format!("fold {unit} {} k={}: scored {} of {}", r.method, r.k, r.confusion.total(), ids.len()));
            }
        }
    }
    if first.to_csv() != second.to_csv() || first.test_sets != second.test_sets {
        problems.push("rerun differs".into());
    }

    let macro_f1 = |m: Method, k: usize| first.aggregate(m, k).map(|a| a.report.macro_.f1);
    let mut summary = Vec::new();
    for &k in &plan.target_train_sizes {
        let majority = macro_f1(Method::Majority, k).unwrap_or(f64::NAN);
        for m in [Method::MaxEnt, Method::GpIcm] {
            let Some(f) = macro_f1(m, k) else { continue };
            summary.push(format!("{m}@{k}={f:.3}"));
            if !(f >= 0.95 && f > majority) {
                problems.push(format!("{m} k={k}: macro-F1 {f:.3} vs majority {majority:.3}"));
            }
        }
    }
    let majority0 = macro_f1(Method::Majority, 0).unwrap_or(f64::NAN);
    verdict(
        6,
        "harness structure",
        problems.is_empty(),
        &if problems.is_empty() {
            format!("{} cells, byte-identical rerun, majority macro-F1 {majority0:.3}, {}", first.fold_results.len(), summary.join(" "))
        } else {
            problems.join("; ")
        },
    );
}

#[test]
fn criterion_7_pipeline_golden_files() {
    let resources = Resources::bundled();
    let golden = include_str!("fixtures/preprocess.golden");
    let mut failures = Vec::new();
    let mut cases = 0;
    for line in golden.lines() {
        let (text, expected) = line.split_once('\t').unwrap();
        let expected: Vec<&str> = expected.split_whitespace().collect();
        let got = preprocess(text, &resources);
        if got != expected {
            failures.push(format!("{text:?} -> {got:?}"));
        }
        cases += 1;
    }
    let smile = Resources::from_strs("", ":)\tsmile\n").unwrap();
    if preprocess(":) :)", &smile) != ["smile", "smile"] || !preprocess("", &resources).is_empty() {
        failures.push("emoticon table or empty input".into());
    }

    let tweet = |id: &str, text: &str, rt: bool| LabeledInstance {
        tweet_id: id.into(),
        text: text.into(),
        rumour_id: "r".into(),
        event_id: "e".into(),
        order_index: 0,
        label: Some(StanceLabel::Supporting),
        is_retweet: rt,
    };
    let split = vec![tweet("1", "is it true?", false), tweet("2", "RT @bbc: is it true?", false)];
    let kept = filter_retweets(split.clone(), true);
    if kept.len() != 1 || kept[0].tweet_id != "1" || filter_retweets(split.clone(), false) != split {
        failures.push("retweet filter".into());
    }
    if !filter_retweets(vec![tweet("3", "fire", true)], true).is_empty() {
        failures.push("flagged retweet kept".into());
    }

    verdict(
        7,
        "pipeline golden files",
        failures.is_empty(),
        &if failures.is_empty() {
            format!("{cases} golden lines, emoticons, retweet filtering")
        } else {
            failures.join("; ")
        },
    );
}

#[test]
fn criterion_8_desk_run() {
    let out = tempfile::tempdir().unwrap();
    let mut config = RunConfig::load(&data_dir().join("synthetic/run.toml")).unwrap();
    config.output_dir = out.path().to_path_buf();
    let started = Instant::now();
    let code = cmd_run(&config);
    let elapsed = started.elapsed();
    let csv = std::fs::read_to_string(out.path().join("results.csv")).unwrap_or_default();
    let written = ["report.json", "config.toml"].iter().all(|f| out.path().join(f).is_file());
    let ok = code == 0 && elapsed < Duration::from_secs(300) && csv.lines().count() > 1 && written;
    verdict(
        8,
        "end-to-end desk run",
        ok,
        &format!("exit {code}, {:.1}s, {} result rows", elapsed.as_secs_f64(), csv.lines().count().saturating_sub(1)),
    );
}
