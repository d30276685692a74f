//! Confusion-matrix accounting with precision, recall and F1 per class,
//! micro-averaged (pooled counts) and macro-averaged (mean of per-class
//! precision and recall, then their harmonic mean).
//!
//! Any 0/0 ratio is defined as 0 and recorded in [`EvaluationReport::undefined`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiclass::StanceLabel;

/// Rows are true classes, columns predicted classes, both in label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_pairs(truths: &[StanceLabel], predictions: &[StanceLabel]) -> Result<Self> {
        if truths.len() != predictions.len() {
            return Err(Error::InvalidInput(format!(
                "{} truths but {} predictions",
                truths.len(),
                predictions.len()
            )));
        }
        let mut m = Self::default();
        for (t, p) in truths.iter().zip(predictions) {
            m.record(*t, *p);
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: StanceLabel, prediction: StanceLabel) {
        self.counts[truth.index()][prediction.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn tp(&self, k: usize) -> u64 {
        self.counts[k][k]
    }

    pub fn fp(&self, k: usize) -> u64 {
        (0..3).map(|r| self.counts[r][k]).sum::<u64>() - self.tp(k)
    }

    pub fn fn_(&self, k: usize) -> u64 {
        self.counts[k].iter().sum::<u64>() - self.tp(k)
    }

    pub fn support(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|k| self.tp(k)).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for r in 0..3 {
            for c in 0..3 {
                self.counts[r][c] += other.counts[r][c];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub confusion: ConfusionMatrix,
    /// Indexed by [`StanceLabel::index`].
    pub per_class: [Scores; 3],
    pub micro: Scores,
    pub macro_: Scores,
    /// `deviation[t][p]`: percentage of true class `t` predicted as `p`; the
    /// diagonal is left at zero.
    pub deviation: [[f64; 3]; 3],
    /// Quantities that came out as 0/0 and were set to 0, e.g. `"precision:denying"`.
    pub undefined: Vec<String>,
}

impl EvaluationReport {
    pub fn accuracy(&self) -> f64 {
        ratio(self.confusion.trace(), self.confusion.total()).unwrap_or(0.0)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn harmonic(p: f64, r: f64) -> Option<f64> {
    if p == r && p > 0.0 {
        // exact, where 2p²/2p may round
        return Some(p);
    }
    let s = p + r;
    (s > 0.0).then(|| 2.0 * p * r / s)
}

fn defined(value: Option<f64>, name: &str, undefined: &mut Vec<String>) -> f64 {
    value.unwrap_or_else(|| {
        undefined.push(name.to_string());
        0.0
    })
}

/// Computes every measure from a confusion matrix.
pub fn report_from_confusion(confusion: ConfusionMatrix) -> Result<EvaluationReport> {
    if confusion.total() == 0 {
        return Err(Error::InvalidInput("cannot score an empty prediction set".into()));
    }
    let mut undefined = Vec::new();
    let mut per_class = [Scores::default(); 3];
    for (k, label) in StanceLabel::ALL.iter().enumerate() {
        let tp = confusion.tp(k);
        let precision = defined(ratio(tp, tp + confusion.fp(k)), &format!("precision:{label}"), &mut undefined);
        let recall = defined(ratio(tp, tp + confusion.fn_(k)), &format!("recall:{label}"), &mut undefined);
        let f1 = defined(harmonic(precision, recall), &format!("f1:{label}"), &mut undefined);
        per_class[k] = Scores { precision, recall, f1 };
    }

    let tp: u64 = (0..3).map(|k| confusion.tp(k)).sum();
    let fp: u64 = (0..3).map(|k| confusion.fp(k)).sum();
    let fn_: u64 = (0..3).map(|k| confusion.fn_(k)).sum();
    let micro_p = defined(ratio(tp, tp + fp), "precision:micro", &mut undefined);
    let micro_r = defined(ratio(tp, tp + fn_), "recall:micro", &mut undefined);
    let micro = Scores {
        precision: micro_p,
        recall: micro_r,
        f1: defined(harmonic(micro_p, micro_r), "f1:micro", &mut undefined),
    };

    let macro_p = per_class.iter().map(|s| s.precision).sum::<f64>() / 3.0;
    let macro_r = per_class.iter().map(|s| s.recall).sum::<f64>() / 3.0;
    let macro_ = Scores {
        precision: macro_p,
        recall: macro_r,
        f1: defined(harmonic(macro_p, macro_r), "f1:macro", &mut undefined),
    };

    let mut deviation = [[0.0; 3]; 3];
    for t in 0..3 {
        let support = confusion.support(t);
        for p in 0..3 {
            if p != t && support > 0 {
                deviation[t][p] = 100.0 * confusion.counts[t][p] as f64 / support as f64;
            }
        }
    }

    Ok(EvaluationReport {
        confusion,
        per_class,
        micro,
        macro_,
        deviation,
        undefined,
    })
}

pub fn score(truths: &[StanceLabel], predictions: &[StanceLabel]) -> Result<EvaluationReport> {
    if truths.is_empty() {
        return Err(Error::InvalidInput("cannot score an empty prediction set".into()));
    }
    report_from_confusion(ConfusionMatrix::from_pairs(truths, predictions)?)
}

/// Pools the fold confusion matrices and scores the result once.
pub fn micro_average_across_folds(folds: &[ConfusionMatrix]) -> Result<EvaluationReport> {
    if folds.is_empty() {
        return Err(Error::InvalidInput("no folds to aggregate".into()));
    }
    let mut pooled = ConfusionMatrix::default();
    for m in folds {
        pooled.merge(m);
    }
    report_from_confusion(pooled)
}

impl EvaluationReport {
    /// One row per class plus `micro` and `macro` rows:
    /// `class,precision,recall,f1,dev_supporting,dev_denying,dev_questioning,support`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,dev_supporting,dev_denying,dev_questioning,support\n");
        for label in StanceLabel::ALL {
            let k = label.index();
            let s = self.per_class[k];
            let dev: Vec<String> = (0..3)
                .map(|p| if p == k { String::new() } else { format!("{:.2}", self.deviation[k][p]) })
                .collect();
            let _ = writeln!(
                out,
                "{label},{},{},{},{},{}",
                s.precision,
                s.recall,
                s.f1,
                dev.join(","),
                self.confusion.support(k)
            );
        }
        for (name, s) in [("micro", self.micro), ("macro", self.macro_)] {
            let _ = writeln!(out, "{name},{},{},{},,,,{}", s.precision, s.recall, s.f1, self.confusion.total());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use StanceLabel::{Denying as D, Questioning as Q, Supporting as S};

    #[test]
    fn perfect_predictions() {
        let t = [S, D, Q, S];
        let r = score(&t, &t).unwrap();
        for s in r.per_class.iter().chain([&r.micro, &r.macro_]) {
            assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        }
        assert!(r.undefined.is_empty());
    }

    #[test]
    fn single_class_counts() {
        // supporting: tp=2, fp=1, fn=1
        let r = score(&[S, S, S, D], &[S, S, D, S]).unwrap();
        let s = r.per_class[0];
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn macro_is_harmonic_mean_of_macro_p_and_r() {
        let r = score(&[S, S, D, Q], &[S, D, D, S]).unwrap();
        assert_eq!(r.micro.f1, 0.5);
        assert!((r.macro_.precision - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.macro_.recall - 0.5).abs() < 1e-15);
        assert!((r.macro_.f1 - 0.4).abs() < 1e-15);
        // questioning is never predicted
        assert!(r.undefined.contains(&"precision:questioning".to_string()));
    }

    #[test]
    fn length_mismatch_and_empty() {
        assert!(score(&[S], &[S, D]).is_err());
        assert!(score(&[], &[]).is_err());
        assert!(micro_average_across_folds(&[]).is_err());
    }

    #[test]
    fn deviation_rows_complete_recall() {
        let r = score(&[S, S, S, D, D, Q], &[S, D, Q, D, S, S]).unwrap();
        for k in 0..3 {
            let row: f64 = r.deviation[k].iter().sum::<f64>() + 100.0 * r.per_class[k].recall;
            assert!((row - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fold_pooling() {
        let a = ConfusionMatrix::from_pairs(&[S, D, S], &[S, S, D]).unwrap();
        let one = micro_average_across_folds(&[a]).unwrap();
        assert_eq!(one, report_from_confusion(a).unwrap());
        let two = micro_average_across_folds(&[a, a]).unwrap();
        assert_eq!(two.per_class, one.per_class);
        assert_eq!(two.macro_, one.macro_);

        // disjoint classes: pooled equals scoring the concatenated lists
        let (t1, p1) = (vec![S, S, S], vec![S, D, S]);
        let (t2, p2) = (vec![Q, Q], vec![Q, S]);
        let pooled = micro_average_across_folds(&[
            ConfusionMatrix::from_pairs(&t1, &p1).unwrap(),
            ConfusionMatrix::from_pairs(&t2, &p2).unwrap(),
        ])
        .unwrap();
        let concat = score(&[t1, t2].concat(), &[p1, p2].concat()).unwrap();
        assert_eq!(pooled, concat);
    }

    #[test]
    fn csv_layout() {
        let csv = score(&[S, D], &[S, S]).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[2].starts_with("denying,0,0,0,100.00,,0.00,1"), "{}", lines[2]);
        assert!(lines[5].starts_with("macro,"));
    }

    fn label() -> impl Strategy<Value = StanceLabel> {
        (0usize..3).prop_map(|i| StanceLabel::ALL[i])
    }

    fn pairs() -> impl Strategy<Value = Vec<(StanceLabel, StanceLabel)>> {
        prop::collection::vec((label(), label()), 1..60)
    }

    proptest! {
        #[test]
        fn micro_f1_is_accuracy(p in pairs()) {
            let (t, q): (Vec<_>, Vec<_>) = p.into_iter().unzip();
            let r = score(&t, &q).unwrap();
            let acc = t.iter().zip(&q).filter(|(a, b)| a == b).count() as f64 / t.len() as f64;
            prop_assert!((r.micro.f1 - acc).abs() < 1e-15);
            prop_assert_eq!(r.micro.f1, r.accuracy());
            for s in r.per_class.iter().chain([&r.micro, &r.macro_]) {
                prop_assert!((0.0..=1.0).contains(&s.f1));
                prop_assert!((0.0..=1.0).contains(&s.precision));
                prop_assert!((0.0..=1.0).contains(&s.recall));
            }
            prop_assert_eq!(r.confusion.total(), t.len() as u64);
        }

        #[test]
        fn macro_f1_invariant_under_relabeling(p in pairs(), perm in Just([0usize, 1, 2]).prop_shuffle()) {
            let (t, q): (Vec<_>, Vec<_>) = p.into_iter().unzip();
            let relabel = |v: &[StanceLabel]| -> Vec<StanceLabel> { v.iter().map(|l| StanceLabel::ALL[perm[l.index()]]).collect() };
            let a = score(&t, &q).unwrap();
            let b = score(&relabel(&t), &relabel(&q)).unwrap();
            prop_assert!((a.macro_.f1 - b.macro_.f1).abs() < 1e-12);
            prop_assert!((a.micro.f1 - b.micro.f1).abs() < 1e-15);
        }

        #[test]
        fn self_score_is_perfect(t in prop::collection::vec(label(), 1..40)) {
            let r = score(&t, &t).unwrap();
            prop_assert_eq!(r.micro.f1, 1.0);
            for k in 0..3 {
                if r.confusion.support(k) > 0 {
                    prop_assert_eq!(r.per_class[k].f1, 1.0);
                }
            }
        }

        #[test]
        fn constant_predictor_recall(t in prop::collection::vec(label(), 1..40), c in label()) {
            let r = score(&t, &vec![c; t.len()]).unwrap();
            for k in 0..3 {
                if r.confusion.support(k) > 0 {
                    prop_assert_eq!(r.per_class[k].recall, if k == c.index() { 1.0 } else { 0.0 });
                }
            }
        }
    }
}
