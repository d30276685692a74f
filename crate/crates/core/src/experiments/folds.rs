use std::collections::{BTreeMap, BTreeSet};

use super::plan::{ExperimentPlan, FoldUnit};
use crate::error::{Error, Result};
use crate::text::LabeledInstance;

/// One held-out unit. Indices refer to the corpus slice the folds were built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub unit: String,
    /// Instances of every other unit.
    pub reference: Vec<usize>,
    /// Target instances ordered by `(order_index, tweet_id)`.
    pub target_order: Vec<usize>,
    /// Position in `target_order` where the test set begins.
    pub test_offset: usize,
}

impl Fold {
    /// Training indices for size `k`: all reference instances plus the first
    /// `k` target instances.
    pub fn train(&self, k: usize) -> Vec<usize> {
        let mut train = self.reference.clone();
        train.extend_from_slice(&self.target_order[..k.min(self.test_offset)]);
        train
    }

    /// Identical for every `k`.
    pub fn test(&self) -> &[usize] {
        &self.target_order[self.test_offset..]
    }
}

#[derive(Debug, Clone, Default)]
pub struct FoldSet {
    pub folds: Vec<Fold>,
    /// Units without enough instances for the requested test offset.
    pub skipped: Vec<String>,
}

pub fn unit_of(instance: &LabeledInstance, unit: FoldUnit) -> &str {
    match unit {
        FoldUnit::Rumour => &instance.rumour_id,
        FoldUnit::Event => &instance.event_id,
    }
}

/// One fold per unit, in sorted unit order.
pub fn build_folds(corpus: &[LabeledInstance], plan: &ExperimentPlan) -> Result<FoldSet> {
    plan.validate()?;
    let mut by_unit: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, inst) in corpus.iter().enumerate() {
        by_unit.entry(unit_of(inst, plan.fold_unit)).or_default().push(i);
    }
    if by_unit.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 fold units, found {}",
            by_unit.len()
        )));
    }
    let offset = plan.resolved_test_offset();
    let mut set = FoldSet::default();
    for (unit, members) in &by_unit {
        if members.len() <= offset {
            set.skipped.push(format!(
                "fold {unit} skipped: {} instances, need more than {offset}",
                members.len()
            ));
            continue;
        }
        let mut target_order = members.clone();
        target_order.sort_by(|&a, &b| {
            let (x, y) = (&corpus[a], &corpus[b]);
            (x.order_index, &x.rumour_id, &x.tweet_id).cmp(&(y.order_index, &y.rumour_id, &y.tweet_id))
        });
        let reference = by_unit
            .iter()
            .filter(|(u, _)| *u != unit)
            .flat_map(|(_, m)| m.iter().copied())
            .collect();
        set.folds.push(Fold {
            unit: unit.to_string(),
            reference,
            target_order,
            test_offset: offset,
        });
    }
    Ok(set)
}

/// Fails if any test tweet id also appears in the training split.
pub fn check_disjoint(corpus: &[LabeledInstance], train: &[usize], test: &[usize]) -> Result<()> {
    let train_ids: BTreeSet<&str> = train.iter().map(|&i| corpus[i].tweet_id.as_str()).collect();
    if let Some(&i) = test.iter().find(|&&i| train_ids.contains(corpus[i].tweet_id.as_str())) {
        return Err(Error::InvalidInput(format!(
            "tweet {} appears in both training and test data",
            corpus[i].tweet_id
        )));
    }
    Ok(())
}
