use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Issue, IssueLink, ProjectDataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Category one-hot positions (slot 0 is unknown/none) and creation-time
/// delta statistics, fitted on training links only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataRegistry {
    pub type_index: BTreeMap<String, usize>,
    pub assignee_index: BTreeMap<String, usize>,
    pub reporter_index: BTreeMap<String, usize>,
    /// Days.
    pub time_delta_mean: f64,
    /// Days, population standard deviation.
    pub time_delta_std: f64,
}

fn index_of(values: impl Iterator<Item = String>) -> BTreeMap<String, usize> {
    let mut sorted: Vec<String> = values.collect();
    sorted.sort();
    sorted.dedup();
    sorted.into_iter().enumerate().map(|(i, v)| (v, i + 1)).collect()
}

pub fn delta_days(a: &Issue, b: &Issue) -> f64 {
    (a.created - b.created).num_milliseconds().abs() as f64 / 86_400_000.0
}

fn one_hot<T: Scalar>(index: &BTreeMap<String, usize>, value: Option<&str>, out: &mut Vec<T>) {
    let slot = value.and_then(|v| index.get(v)).copied().unwrap_or(0);
    let start = out.len();
    out.extend(std::iter::repeat_n(T::zero(), index.len() + 1));
    out[start + slot] = T::one();
}

impl MetadataRegistry {
    pub fn fit(train_links: &[IssueLink], dataset: &ProjectDataset) -> Result<Self> {
        if train_links.is_empty() {
            return Err(Error::invalid("metadata registry needs at least one training link"));
        }
        let lookup = dataset.issue_index();
        let resolve = |id: &str| {
            lookup
                .get(id)
                .map(|&i| &dataset.issues[i])
                .ok_or_else(|| Error::invalid(format!("link endpoint {id} not in dataset")))
        };
        let mut endpoints = Vec::with_capacity(2 * train_links.len());
        let mut deltas = Vec::with_capacity(train_links.len());
        for link in train_links {
            let a = resolve(&link.source)?;
            let b = resolve(&link.target)?;
            deltas.push(delta_days(a, b));
            endpoints.push(a);
            endpoints.push(b);
        }
        let n = deltas.len() as f64;
        let mean = deltas.iter().sum::<f64>() / n;
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        Ok(MetadataRegistry {
            type_index: index_of(endpoints.iter().map(|i| i.issue_type.clone())),
            assignee_index: index_of(endpoints.iter().filter_map(|i| i.assignee.clone())),
            reporter_index: index_of(endpoints.iter().map(|i| i.reporter.clone())),
            time_delta_mean: mean,
            time_delta_std: var.sqrt(),
        })
    }

    pub fn width(&self) -> usize {
        1 + 2 * (self.type_index.len() + 1)
            + 2 * (self.assignee_index.len() + 1)
            + 2 * (self.reporter_index.len() + 1)
    }

    pub fn normalized_delta(&self, a: &Issue, b: &Issue) -> f64 {
        if self.time_delta_std == 0.0 {
            return 0.0;
        }
        (delta_days(a, b) - self.time_delta_mean) / self.time_delta_std
    }

    /// `[delta, type(a), type(b), assignee(a), assignee(b), reporter(a), reporter(b)]`
    pub fn encode<T: Scalar>(&self, a: &Issue, b: &Issue) -> Vec<T> {
        let mut out = Vec::with_capacity(self.width());
        out.push(T::of(self.normalized_delta(a, b)));
        for issue in [a, b] {
            one_hot(&self.type_index, Some(&issue.issue_type), &mut out);
        }
        for issue in [a, b] {
            one_hot(&self.assignee_index, issue.assignee.as_deref(), &mut out);
        }
        for issue in [a, b] {
            one_hot(&self.reporter_index, Some(&issue.reporter), &mut out);
        }
        out
    }
}

pub fn fit_metadata_registry(train_links: &[IssueLink], dataset: &ProjectDataset) -> Result<MetadataRegistry> {
    MetadataRegistry::fit(train_links, dataset)
}

pub fn encode_metadata<T: Scalar>(registry: &MetadataRegistry, a: &Issue, b: &Issue) -> Vec<T> {
    registry.encode(a, b)
}
