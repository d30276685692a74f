//! Reference classifiers over the same sparse features as the GP methods.

use crate::multiclass::{argmax_with_precedence, StanceExample, StanceLabel};
use crate::text::SparseFeatureVector;

fn class_counts(train: &[StanceExample]) -> [usize; 3] {
    let mut counts = [0; 3];
    for e in train {
        if let Some(l) = e.label {
            counts[l.index()] += 1;
        }
    }
    counts
}

/// Most frequent training label, ties by precedence.
pub fn majority_label(train: &[StanceExample]) -> StanceLabel {
    let counts = class_counts(train);
    argmax_with_precedence(&counts.map(|c| c as f64))
}

pub fn run_baseline_majority(train: &[StanceExample], test: &[StanceExample]) -> Vec<StanceLabel> {
    vec![majority_label(train); test.len()]
}

fn dimension(train: &[StanceExample]) -> usize {
    train
        .iter()
        .filter_map(|e| e.features.entries().last().map(|&(i, _)| i as usize + 1))
        .max()
        .unwrap_or(0)
}

fn sparse_dot(x: &SparseFeatureVector, w: &[f64]) -> f64 {
    x.entries()
        .iter()
        .filter(|(i, _)| (*i as usize) < w.len())
        .map(|&(i, c)| f64::from(c) * w[i as usize])
        .sum()
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary L2-regularised logistic regression; the intercept is not penalised.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryLogReg {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl BinaryLogReg {
    pub fn decision(&self, x: &SparseFeatureVector) -> f64 {
        sparse_dot(x, &self.weights) + self.intercept
    }
}

/// `Σ log(1 + exp(-y_i z_i)) + λ/2 |w|²` with `z_i = wᵀx_i + b`.
pub fn logreg_objective(xs: &[&SparseFeatureVector], ys: &[f64], l2: f64, w: &[f64], b: f64) -> f64 {
    let loss: f64 = xs.iter().zip(ys).map(|(x, y)| softplus(-y * (sparse_dot(x, w) + b))).sum();
    loss + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

/// Gradient laid out as `[w..., b]`.
pub fn logreg_gradient(xs: &[&SparseFeatureVector], ys: &[f64], l2: f64, w: &[f64], b: f64) -> Vec<f64> {
    let d = w.len();
    let mut g: Vec<f64> = w.iter().map(|v| l2 * v).collect();
    g.push(0.0);
    for (x, y) in xs.iter().zip(ys) {
        let r = -y * sigmoid(-y * (sparse_dot(x, w) + b));
        for &(i, c) in x.entries() {
            if (i as usize) < d {
                g[i as usize] += r * f64::from(c);
            }
        }
        g[d] += r;
    }
    g
}

/// Newton's method with conjugate-gradient inner solves and a backtracking
/// line search.
pub fn fit_binary_logreg(xs: &[&SparseFeatureVector], ys: &[f64], l2: f64, dim: usize) -> BinaryLogReg {
    const MAX_NEWTON: usize = 100;
    const TOLERANCE: f64 = 1e-10;
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut value = logreg_objective(xs, ys, l2, &w, b);
    for _ in 0..MAX_NEWTON {
        let g = logreg_gradient(xs, ys, l2, &w, b);
        let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if g_norm < TOLERANCE * (1.0 + xs.len() as f64) {
            break;
        }
        let curvature: Vec<f64> = xs
            .iter()
            .map(|x| {
                let p = sigmoid(sparse_dot(x, &w) + b);
                p * (1.0 - p)
            })
            .collect();
        let hessian_times = |v: &[f64]| -> Vec<f64> {
            let mut out: Vec<f64> = v[..dim].iter().map(|a| l2 * a).collect();
            out.push(0.0);
            for (x, h) in xs.iter().zip(&curvature) {
                let xv = sparse_dot(x, &v[..dim]) + v[dim];
                let s = h * xv;
                for &(i, c) in x.entries() {
                    if (i as usize) < dim {
                        out[i as usize] += s * f64::from(c);
                    }
                }
                out[dim] += s;
            }
            out
        };
        let step = conjugate_gradient(hessian_times, &g, (0.1f64).min(g_norm.sqrt()) * g_norm, 2 * (dim + 1) + 10);
        let slope: f64 = step.iter().zip(&g).map(|(s, gi)| s * gi).sum();
        if slope >= 0.0 {
            break;
        }
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..50 {
            let trial_w: Vec<f64> = w.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let trial_b = b + t * step[dim];
            let trial = logreg_objective(xs, ys, l2, &trial_w, trial_b);
            if trial <= value + 1e-4 * t * slope {
                w = trial_w;
                b = trial_b;
                improved = value - trial > 0.0;
                value = trial;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    BinaryLogReg { weights: w, intercept: b }
}

/// Solves `H p = -g` approximately.
fn conjugate_gradient(h: impl Fn(&[f64]) -> Vec<f64>, g: &[f64], tolerance: f64, max_iters: usize) -> Vec<f64> {
    let n = g.len();
    let mut p = vec![0.0; n];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut d = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..max_iters {
        if rr.sqrt() <= tolerance {
            break;
        }
        let hd = h(&d);
        let dhd: f64 = d.iter().zip(&hd).map(|(a, b)| a * b).sum();
        if dhd <= 0.0 {
            break;
        }
        let alpha = rr / dhd;
        for i in 0..n {
            p[i] += alpha * d[i];
            r[i] -= alpha * hd[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            d[i] = r[i] + beta * d[i];
        }
    }
    p
}

/// One-vs-rest logistic regression ("MaxEnt").
#[derive(Debug, Clone)]
pub struct LogRegModel {
    /// `None` for classes absent from the training data.
    pub classes: [Option<BinaryLogReg>; 3],
    fallback: StanceLabel,
}

impl LogRegModel {
    pub fn fit(train: &[StanceExample], l2: f64) -> Self {
        let fallback = majority_label(train);
        let counts = class_counts(train);
        let mut classes: [Option<BinaryLogReg>; 3] = [None, None, None];
        if counts.iter().filter(|&&c| c > 0).count() >= 2 {
            let dim = dimension(train);
            let xs: Vec<&SparseFeatureVector> = train.iter().map(|e| &e.features).collect();
            for label in StanceLabel::ALL {
                if counts[label.index()] == 0 {
                    continue;
                }
                let ys: Vec<f64> = train
                    .iter()
                    .map(|e| if e.label == Some(label) { 1.0 } else { -1.0 })
                    .collect();
                classes[label.index()] = Some(fit_binary_logreg(&xs, &ys, l2, dim));
            }
        }
        Self { classes, fallback }
    }

    pub fn predict(&self, x: &SparseFeatureVector) -> StanceLabel {
        if self.classes.iter().all(Option::is_none) {
            return self.fallback;
        }
        let scores = self
            .classes
            .each_ref()
            .map(|c| c.as_ref().map_or(f64::NEG_INFINITY, |m| m.decision(x)));
        argmax_with_precedence(&scores)
    }
}

pub fn run_baseline_logreg(train: &[StanceExample], test: &[StanceExample], l2_strength: f64) -> Vec<StanceLabel> {
    let model = LogRegModel::fit(train, l2_strength);
    test.iter().map(|e| model.predict(&e.features)).collect()
}

/// Multinomial naive Bayes with additive smoothing.
#[derive(Debug, Clone)]
pub struct NaiveBayesModel {
    /// `ln P(c)`; `-inf` for classes absent from training.
    pub log_prior: [f64; 3],
    /// `ln P(f | c)` for each feature index below the training dimension.
    pub log_likelihood: [Vec<f64>; 3],
}

impl NaiveBayesModel {
    pub fn fit(train: &[StanceExample], alpha: f64) -> Self {
        let dim = dimension(train);
        let counts = class_counts(train);
        let n: usize = counts.iter().sum();
        let mut feature_counts = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
        for e in train {
            let Some(l) = e.label else { continue };
            for &(i, c) in e.features.entries() {
                feature_counts[l.index()][i as usize] += f64::from(c);
            }
        }
        let log_prior = counts.map(|c| if c == 0 { f64::NEG_INFINITY } else { (c as f64 / n as f64).ln() });
        let log_likelihood = feature_counts.map(|fc| {
            let total: f64 = fc.iter().sum();
            let denom = total + alpha * dim as f64;
            fc.iter().map(|c| ((c + alpha) / denom).ln()).collect()
        });
        Self {
            log_prior,
            log_likelihood,
        }
    }

    /// Unnormalised log posterior per class.
    pub fn log_scores(&self, x: &SparseFeatureVector) -> [f64; 3] {
        let mut scores = self.log_prior;
        for (k, s) in scores.iter_mut().enumerate() {
            if s.is_finite() {
                *s += sparse_dot(x, &self.log_likelihood[k]);
            }
        }
        scores
    }

    pub fn predict(&self, x: &SparseFeatureVector) -> StanceLabel {
        argmax_with_precedence(&self.log_scores(x))
    }
}

pub fn run_baseline_nb(train: &[StanceExample], test: &[StanceExample], smoothing_alpha: f64) -> Vec<StanceLabel> {
    let model = NaiveBayesModel::fit(train, smoothing_alpha);
    test.iter().map(|e| model.predict(&e.features)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use StanceLabel::{Denying as D, Questioning as Q, Supporting as S};

    fn ex(features: &[u32], label: StanceLabel) -> StanceExample {
        StanceExample {
            tweet_id: String::new(),
            rumour_id: "r".into(),
            features: SparseFeatureVector::from_dense(features),
            label: Some(label),
        }
    }

    #[test]
    fn majority_examples() {
        let train = [ex(&[], S), ex(&[], S), ex(&[], S), ex(&[], D), ex(&[], Q)];
        assert_eq!(run_baseline_majority(&train, &train), vec![S; 5]);
        let tie = [ex(&[], D), ex(&[], S)];
        assert_eq!(majority_label(&tie), S);
        let tie = [ex(&[], Q), ex(&[], D)];
        assert_eq!(majority_label(&tie), D);
    }

    #[test]
    fn logreg_separable_two_class() {
        let train = [ex(&[2, 0], S), ex(&[1, 0], S), ex(&[3, 1], S), ex(&[0, 2], D), ex(&[0, 1], D), ex(&[1, 3], D)];
        assert_eq!(
            run_baseline_logreg(&train, &train, 1.0),
            train.iter().map(|e| e.label.unwrap()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn logreg_zero_features_follow_priors() {
        let train = [ex(&[1], D), ex(&[0, 1], D), ex(&[1, 1], D), ex(&[2], S), ex(&[0, 0, 1], Q)];
        assert_eq!(run_baseline_logreg(&train, &[ex(&[], S)], 1.0), vec![D]);
    }

    #[test]
    fn logreg_single_class_falls_back() {
        let train = [ex(&[1], Q), ex(&[2], Q)];
        assert_eq!(run_baseline_logreg(&train, &[ex(&[5], S)], 1.0), vec![Q]);
    }

    #[test]
    fn newton_matches_gradient_descent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let train: Vec<StanceExample> = (0..10)
            .map(|_| {
                let f: Vec<u32> = (0..4).map(|_| rng.gen_range(0..3)).collect();
                ex(&f, StanceLabel::ALL[rng.gen_range(0..3)])
            })
            .collect();
        let xs: Vec<&SparseFeatureVector> = train.iter().map(|e| &e.features).collect();
        let dim = dimension(&train);
        for label in StanceLabel::ALL {
            let ys: Vec<f64> = train.iter().map(|e| if e.label == Some(label) { 1.0 } else { -1.0 }).collect();
            let fit = fit_binary_logreg(&xs, &ys, 1.0, dim);
            // plain gradient descent, small fixed step, many iterations
            let (mut w, mut b) = (vec![0.0; dim], 0.0);
            for _ in 0..200_000 {
                let g = logreg_gradient(&xs, &ys, 1.0, &w, b);
                for i in 0..dim {
                    w[i] -= 0.01 * g[i];
                }
                b -= 0.01 * g[dim];
            }
            for i in 0..dim {
                assert!((fit.weights[i] - w[i]).abs() < 1e-6, "{label} w{i}: {} vs {}", fit.weights[i], w[i]);
            }
            assert!((fit.intercept - b).abs() < 1e-6);
        }
        let oracle_preds = run_baseline_logreg(&train, &train, 1.0);
        assert_eq!(oracle_preds.len(), 10);
    }

    #[test]
    fn nb_hand_computed() {
        // feature counts: S = [2,1] (3 tokens), D = [0,3] (3 tokens), two instances each
        let train = [ex(&[1, 1], S), ex(&[1], S), ex(&[0, 2], D), ex(&[0, 1], D)];
        let m = NaiveBayesModel::fit(&train, 1.0);
        // alpha = 1, V = 2: P(f0|S) = 3/5, P(f1|S) = 2/5, P(f0|D) = 1/5, P(f1|D) = 4/5
        let expect = [[0.6f64, 0.4], [0.2, 0.8]];
        for k in 0..2 {
            for f in 0..2 {
                assert!((m.log_likelihood[k][f].exp() - expect[k][f]).abs() < 1e-15);
            }
        }
        // x = [1,1]: posterior ratio S:D = (0.6·0.4) : (0.2·0.8) = 3 : 2
        let s = m.log_scores(&SparseFeatureVector::from_dense(&[1, 1]));
        assert!(((s[0] - s[1]).exp() - 1.5).abs() < 1e-12);
        assert_eq!(s[2], f64::NEG_INFINITY);
        assert_eq!(m.predict(&SparseFeatureVector::from_dense(&[1, 1])), S);
        assert_eq!(m.predict(&SparseFeatureVector::from_dense(&[0, 2])), D);
    }

    #[test]
    fn nb_single_class_and_ties() {
        let train = [ex(&[1], Q), ex(&[0, 3], Q)];
        assert_eq!(run_baseline_nb(&train, &[ex(&[4, 4], S), ex(&[], S)], 1.0), vec![Q, Q]);
        let sym = [ex(&[1, 0], S), ex(&[0, 1], D)];
        assert_eq!(run_baseline_nb(&sym, &[ex(&[1, 1], Q)], 1.0), vec![S]);
    }
}
