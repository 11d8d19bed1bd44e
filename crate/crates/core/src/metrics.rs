//! Accuracy and group fairness metrics on labelled predictions.
//!
//! Multi-group gaps (accuracy disparity, equality of opportunity,
//! demographic parity) are reported as the largest pairwise gap, i.e.
//! max − min of the per-group rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedPredictions {
    pub y_true: Vec<usize>,
    pub y_pred: Vec<usize>,
    pub groups: Vec<usize>,
    pub positive_label: usize,
}

impl GroupedPredictions {
    pub fn new(y_true: Vec<usize>, y_pred: Vec<usize>, groups: Vec<usize>, positive_label: usize) -> Result<Self> {
        if y_true.len() != y_pred.len() || y_true.len() != groups.len() {
            return invalid("true labels, predictions and groups differ in length");
        }
        if y_true.is_empty() {
            return invalid("no predictions to evaluate");
        }
        Ok(Self {
            y_true,
            y_pred,
            groups,
            positive_label,
        })
    }

    fn by_group(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &g) in self.groups.iter().enumerate() {
            out.entry(g).or_default().push(i);
        }
        out
    }
}

pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> f64 {
    if y_true.is_empty() {
        return f64::NAN;
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    hits as f64 / y_true.len() as f64
}

/// Error rate within each true class; NaN for classes without instances.
pub fn per_class_errors(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Vec<f64> {
    let mut total = vec![0usize; n_classes];
    let mut wrong = vec![0usize; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t < n_classes {
            total[t] += 1;
            if t != p {
                wrong[t] += 1;
            }
        }
    }
    total
        .iter()
        .zip(&wrong)
        .map(|(&n, &w)| if n == 0 { f64::NAN } else { w as f64 / n as f64 })
        .collect()
}

/// Accuracy per group id, in ascending id order.
pub fn group_accuracies(gp: &GroupedPredictions) -> BTreeMap<usize, f64> {
    gp.by_group()
        .into_iter()
        .map(|(g, idx)| {
            let hits = idx.iter().filter(|&&i| gp.y_true[i] == gp.y_pred[i]).count();
            (g, hits as f64 / idx.len() as f64)
        })
        .collect()
}

pub fn worst_group_accuracy(gp: &GroupedPredictions) -> f64 {
    group_accuracies(gp).values().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_acc_disparity(gp: &GroupedPredictions) -> f64 {
    spread(group_accuracies(gp).values().copied())
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// True-positive rate per group; groups without positive instances are
/// left out.
pub fn true_positive_rates(gp: &GroupedPredictions) -> BTreeMap<usize, f64> {
    gp.by_group()
        .into_iter()
        .filter_map(|(g, idx)| {
            let positives: Vec<usize> = idx.into_iter().filter(|&i| gp.y_true[i] == gp.positive_label).collect();
            if positives.is_empty() {
                return None;
            }
            let hits = positives.iter().filter(|&&i| gp.y_pred[i] == gp.positive_label).count();
            Some((g, hits as f64 / positives.len() as f64))
        })
        .collect()
}

/// Rate of positive predictions per group.
pub fn positive_rates(gp: &GroupedPredictions) -> BTreeMap<usize, f64> {
    gp.by_group()
        .into_iter()
        .map(|(g, idx)| {
            let pos = idx.iter().filter(|&&i| gp.y_pred[i] == gp.positive_label).count();
            (g, pos as f64 / idx.len() as f64)
        })
        .collect()
}

/// Equality of opportunity gap: largest pairwise TPR difference.
pub fn eop(gp: &GroupedPredictions) -> f64 {
    spread(true_positive_rates(gp).values().copied())
}

/// Demographic parity gap: largest pairwise positive-prediction-rate
/// difference.
pub fn dp(gp: &GroupedPredictions) -> f64 {
    spread(positive_rates(gp).values().copied())
}

/// Every reported metric in one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessSummary {
    pub n: usize,
    pub accuracy: f64,
    pub worst_group_accuracy: f64,
    pub max_acc_disparity: f64,
    pub eop: f64,
    pub dp: f64,
    pub group_accuracies: BTreeMap<usize, f64>,
    pub group_sizes: BTreeMap<usize, usize>,
    /// Groups left out of the EOp gap for lack of positive instances.
    pub eop_excluded_groups: Vec<usize>,
}

pub fn summarize(gp: &GroupedPredictions) -> FairnessSummary {
    let tpr = true_positive_rates(gp);
    let by_group = gp.by_group();
    FairnessSummary {
        n: gp.y_true.len(),
        accuracy: accuracy(&gp.y_true, &gp.y_pred),
        worst_group_accuracy: worst_group_accuracy(gp),
        max_acc_disparity: max_acc_disparity(gp),
        eop: eop(gp),
        dp: dp(gp),
        group_accuracies: group_accuracies(gp),
        eop_excluded_groups: by_group.keys().copied().filter(|g| !tpr.contains_key(g)).collect(),
        group_sizes: by_group.into_iter().map(|(g, idx)| (g, idx.len())).collect(),
    }
}

/// Combines several sensitive columns into intersectional group ids,
/// numbered by first appearance; only combinations that occur get an id.
pub fn intersect_groups(columns: &[&[usize]]) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return invalid("sensitive columns differ in length");
    }
    let mut ids: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut combos = Vec::new();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let key: Vec<usize> = columns.iter().map(|c| c[i]).collect();
        let next = ids.len();
        let id = *ids.entry(key.clone()).or_insert_with(|| {
            combos.push(key);
            next
        });
        out.push(id);
    }
    Ok((out, combos))
}
