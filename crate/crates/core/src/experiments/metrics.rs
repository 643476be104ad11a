//! Weighted F1 and confusion matrices.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Summary<L> {
    pub weighted_f1: f64,
    /// Every label that is true or predicted at least once. Labels that are
    /// only predicted have zero support and zero weight.
    pub per_label: BTreeMap<L, LabelScore>,
}

pub fn weighted_f1<L: Ord + Clone>(y_true: &[L], y_pred: &[L]) -> Result<F1Summary<L>> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("cannot score an empty prediction set"));
    }
    #[derive(Default)]
    struct Tally {
        tp: usize,
        support: usize,
        predicted: usize,
    }
    let mut tallies: BTreeMap<&L, Tally> = BTreeMap::new();
    for (t, p) in y_true.iter().zip(y_pred) {
        tallies.entry(t).or_default().support += 1;
        tallies.entry(p).or_default().predicted += 1;
        if t == p {
            tallies.get_mut(t).expect("inserted above").tp += 1;
        }
    }
    let n = y_true.len() as f64;
    let mut per_label = BTreeMap::new();
    let mut weighted = 0.0;
    for (label, t) in tallies {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(t.tp, t.predicted);
        let recall = ratio(t.tp, t.support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        weighted += t.support as f64 * f1;
        per_label.insert(
            label.clone(),
            LabelScore {
                precision,
                recall,
                f1,
                support: t.support,
            },
        );
    }
    Ok(F1Summary {
        weighted_f1: weighted / n,
        per_label,
    })
}

/// Weighted F1 of always predicting the most frequent class, from class
/// counts: `p·2p/(1+p)` with `p` the majority share.
pub fn majority_weighted_f1(class_counts: &[usize]) -> f64 {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let p = *class_counts.iter().max().expect("non-empty") as f64 / total as f64;
    p * 2.0 * p / (1.0 + p)
}

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn empty(labels: Vec<String>) -> Self {
        let k = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Adds the counts of a matrix with the same label order.
    pub fn accumulate(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.labels != self.labels {
            return Err(Error::invalid("confusion matrices have different label orders"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

pub fn confusion_matrix<L: Ord + Display>(y_true: &[L], y_pred: &[L], order: &[L]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let position: BTreeMap<&L, usize> = order.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let find = |l: &L| position.get(l).copied().ok_or_else(|| Error::UnknownLabel(l.to_string()));
    let mut m = ConfusionMatrix::empty(order.iter().map(ToString::to_string).collect());
    for (t, p) in y_true.iter().zip(y_pred) {
        m.counts[find(t)?][find(p)?] += 1;
    }
    Ok(m)
}

/// Sorted union of the labels in both slices.
pub fn label_union<L: Ord + Clone>(a: &[L], b: &[L]) -> Vec<L> {
    a.iter().chain(b).cloned().collect::<BTreeSet<_>>().into_iter().collect()
}
