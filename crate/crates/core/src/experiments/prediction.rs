//! Label prediction for future issues: chronological train/test splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{IssueLink, ProjectDataset};
use crate::encoders::{EmbeddingSource, IssueTable};
use crate::error::{Error, Result};
use crate::experiments::metrics::{confusion_matrix, label_union, weighted_f1};
use crate::experiments::report::{EvalReport, SplitReport};
use crate::experiments::{derive_seed, fit_pipeline, ExperimentConfig, ExperimentOutcome};
use crate::scalar::Scalar;
use crate::textprep::NormalizationConfig;

/// Percentages of issues (by creation order) used for training and for the
/// test window that follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSplitSpec {
    pub train_percent: u32,
    pub test_percent: u32,
}

impl TimeSplitSpec {
    pub const SIXTY_TWENTY: TimeSplitSpec = TimeSplitSpec {
        train_percent: 60,
        test_percent: 20,
    };
    pub const EIGHTY_TWENTY: TimeSplitSpec = TimeSplitSpec {
        train_percent: 80,
        test_percent: 20,
    };

    pub fn new(train_percent: u32, test_percent: u32) -> Result<Self> {
        if train_percent == 0 || test_percent == 0 || train_percent + test_percent > 100 {
            return Err(Error::invalid(format!(
                "invalid split {train_percent}-{test_percent}: both parts must be positive and sum to at most 100"
            )));
        }
        Ok(TimeSplitSpec {
            train_percent,
            test_percent,
        })
    }

    pub fn train_fraction(&self) -> f64 {
        self.train_percent as f64 / 100.0
    }

    pub fn test_fraction(&self) -> f64 {
        self.test_percent as f64 / 100.0
    }
}

impl fmt::Display for TimeSplitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.train_percent, self.test_percent)
    }
}

impl FromStr for TimeSplitSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("split must look like 60-20, got `{s}`"));
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        TimeSplitSpec::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSplit {
    pub train: Vec<IssueLink>,
    pub test: Vec<IssueLink>,
    /// Issues created before the cutoff.
    pub train_issues: BTreeSet<String>,
    /// Issues of the test window.
    pub test_issues: BTreeSet<String>,
}

fn ceil_percent(percent: u32, n: usize) -> usize {
    (percent as usize * n).div_ceil(100)
}

/// Orders issues by creation time (ties by id). Links with both endpoints
/// before the cutoff train; links whose later endpoint falls in the test
/// window test; the rest are discarded.
pub fn time_split(dataset: &ProjectDataset, spec: TimeSplitSpec) -> TimeSplit {
    let mut order: Vec<(&chrono::DateTime<chrono::Utc>, &str)> =
        dataset.issues.iter().map(|i| (&i.created, i.id.as_str())).collect();
    order.sort();
    let n = order.len();
    let cutoff = ceil_percent(spec.train_percent, n).min(n);
    let window_end = (cutoff + ceil_percent(spec.test_percent, n)).min(n);
    let rank: BTreeMap<&str, usize> = order.iter().enumerate().map(|(r, (_, id))| (*id, r)).collect();
    let mut split = TimeSplit {
        train: Vec::new(),
        test: Vec::new(),
        train_issues: order[..cutoff].iter().map(|(_, id)| id.to_string()).collect(),
        test_issues: order[cutoff..window_end].iter().map(|(_, id)| id.to_string()).collect(),
    };
    for link in &dataset.links {
        let (Some(&a), Some(&b)) = (rank.get(link.source.as_str()), rank.get(link.target.as_str())) else {
            continue;
        };
        let later = a.max(b);
        if later < cutoff {
            split.train.push(link.clone());
        } else if later < window_end {
            split.test.push(link.clone());
        }
    }
    split
}

/// Fits everything on the training links of `spec` and scores the test
/// window. Test labels unseen in training stay in the scoring.
pub fn run_prediction_experiment<T: Scalar>(
    dataset: &ProjectDataset,
    spec: TimeSplitSpec,
    config: &ExperimentConfig,
    normalization: &NormalizationConfig,
    embeddings: Option<&EmbeddingSource<'_, T>>,
) -> Result<ExperimentOutcome> {
    config.features.validate()?;
    let split = time_split(dataset, spec);
    if split.test.is_empty() {
        return Err(Error::invalid(format!("the {spec} split has no test links")));
    }
    let label_set: Vec<String> = split
        .train
        .iter()
        .map(|l| l.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if label_set.len() < 2 {
        return Err(Error::invalid(format!(
            "the {spec} split has {} training label(s), at least 2 required",
            label_set.len()
        )));
    }
    let table = IssueTable::new(dataset, normalization);
    let pipeline = fit_pipeline(
        &split.train,
        &table,
        config,
        &label_set,
        derive_seed(config.seed, 0),
        embeddings,
        None,
    )?;
    let predicted = pipeline.predict(&split.test, &table)?;
    let truth: Vec<String> = split.test.iter().map(|l| l.label.clone()).collect();
    let scores = weighted_f1(&truth, &predicted)?;
    let order = label_union(&label_set, &truth);
    let report = EvalReport {
        weighted_f1: scores.weighted_f1,
        per_label: scores.per_label,
        confusion: confusion_matrix(&truth, &predicted, &order)?,
        config: serde_json::to_value(config)?,
        seed: config.seed,
        folds: None,
        split: Some(SplitReport {
            name: spec.to_string(),
            train_fraction: spec.train_fraction(),
            test_fraction: spec.test_fraction(),
            train_links: split.train.len(),
            test_links: split.test.len(),
            classifier: pipeline.classifier.spec.clone(),
        }),
        timestamp: None,
    };
    Ok(ExperimentOutcome {
        report,
        trials: vec![pipeline.trials],
        provenance: vec![pipeline.encoders.text.provenance().cloned().unwrap_or_default()],
        test_issues: split.test_issues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::dataset;
    use crate::encoders::{LinkFeatureConfig, TextEncoderKind};
    use crate::learners::ClassifierKind;

    // P-i is the (i+1)-th issue by creation date.
    fn ten(links: &[(&str, &str, &str)]) -> ProjectDataset {
        dataset(10, links)
    }

    #[test]
    fn window_membership() {
        let ds = ten(&[
            ("P-6", "P-1", "a"),
            ("P-2", "P-4", "b"),
            ("P-8", "P-9", "c"),
            ("P-7", "P-0", "d"),
        ]);
        let s = time_split(&ds, TimeSplitSpec::SIXTY_TWENTY);
        assert_eq!(s.train.iter().map(|l| l.label.as_str()).collect::<Vec<_>>(), ["b"]);
        assert_eq!(s.test.iter().map(|l| l.label.as_str()).collect::<Vec<_>>(), ["a", "d"]);
        assert_eq!(s.test_issues, ["P-6", "P-7"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn creation_ties_break_by_id() {
        let mut ds = ten(&[("P-5", "P-0", "x")]);
        let same = ds.issues[5].created;
        ds.issues[6].created = same;
        ds.issues[6].id = "P-5a".into();
        ds.issues[5].id = "P-5b".into();
        ds.links[0].source = "P-5a".into();
        let s = time_split(&ds, TimeSplitSpec::new(60, 20).unwrap());
        assert!(s.train_issues.contains("P-5a") && !s.train_issues.contains("P-5b"));
        assert_eq!(s.train.len(), 1);
    }

    #[test]
    fn split_parsing() {
        assert_eq!("80-20".parse::<TimeSplitSpec>().unwrap(), TimeSplitSpec::EIGHTY_TWENTY);
        assert!("90-20".parse::<TimeSplitSpec>().is_err());
        assert!("sixty".parse::<TimeSplitSpec>().is_err());
    }

    #[test]
    fn unseen_test_labels_are_scored_as_misses() {
        let mut links = Vec::new();
        let names: Vec<String> = (0..20).map(|i| format!("P-{i}")).collect();
        for i in 0..10 {
            links.push((names[i].as_str(), names[i + 1].as_str(), if i % 2 == 0 { "a" } else { "b" }));
        }
        links.push((names[13].as_str(), names[2].as_str(), "new"));
        links.push((names[14].as_str(), names[3].as_str(), "a"));
        let ds = dataset(20, &links);
        let cfg = ExperimentConfig::new(LinkFeatureConfig::new(TextEncoderKind::None, true).unwrap(), ClassifierKind::Lr);
        let out = run_prediction_experiment::<f64>(&ds, TimeSplitSpec::SIXTY_TWENTY, &cfg, &NormalizationConfig::empty(), None)
            .unwrap();
        let unseen = out.report.per_label["new"];
        assert_eq!(unseen.f1, 0.0);
        assert_eq!(unseen.support, 1);
        assert_eq!(out.report.per_label.values().map(|s| s.support).sum::<usize>(), 2);
    }

    #[test]
    fn empty_test_window_is_an_error() {
        let ds = ten(&[("P-0", "P-1", "a"), ("P-1", "P-2", "b")]);
        let cfg = ExperimentConfig::new(LinkFeatureConfig::new(TextEncoderKind::None, true).unwrap(), ClassifierKind::Lr);
        assert!(run_prediction_experiment::<f64>(&ds, TimeSplitSpec::SIXTY_TWENTY, &cfg, &NormalizationConfig::empty(), None)
            .is_err());
    }
}
