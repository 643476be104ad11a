//! Label recovery: stratified cross-validation over the links of a project.

use std::collections::{BTreeMap, BTreeSet};

use crate::dataset::{IssueLink, ProjectDataset};
use crate::encoders::{EmbeddingSource, FittedEncoders, IssueTable};
use crate::error::{Error, Result};
use crate::experiments::metrics::{confusion_matrix, weighted_f1, ConfusionMatrix};
use crate::experiments::report::{EvalReport, FoldReport};
use crate::experiments::{derive_seed, fit_pipeline, ExperimentConfig, ExperimentOutcome};
use crate::scalar::Scalar;
use crate::textprep::NormalizationConfig;
use crate::tuning::{complement, stratified_kfold};

pub const OUTER_FOLDS: usize = 5;
pub const MIN_LABEL_INSTANCES: usize = OUTER_FOLDS;

/// Outer stratified 5-fold cross-validation. Each fold fits encoders on its
/// training links, tunes or uses the defaults, trains and scores the held-out
/// links. The report holds the mean fold score and the pooled confusion
/// matrix and per-label scores.
pub fn run_recovery_experiment<T: Scalar>(
    dataset: &ProjectDataset,
    config: &ExperimentConfig,
    normalization: &NormalizationConfig,
    embeddings: Option<&EmbeddingSource<'_, T>>,
) -> Result<ExperimentOutcome> {
    config.features.validate()?;
    let links = &dataset.links;
    if links.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labels: Vec<String> = links.iter().map(|l| l.label.clone()).collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &labels {
        *counts.entry(l).or_default() += 1;
    }
    if let Some((label, &count)) = counts.iter().find(|(_, &c)| c < MIN_LABEL_INSTANCES) {
        return Err(Error::TooFewInstances {
            label: label.to_string(),
            count,
            required: MIN_LABEL_INSTANCES,
        });
    }
    let label_set: Vec<String> = counts.keys().map(|s| s.to_string()).collect();
    let table = IssueTable::new(dataset, normalization);
    let shared = if config.fit_encoders_once {
        Some(FittedEncoders::fit(config.features, links, &table, embeddings)?)
    } else {
        None
    };
    let folds = stratified_kfold(&labels, OUTER_FOLDS, config.seed)?;
    let mut fold_reports = Vec::with_capacity(OUTER_FOLDS);
    let mut pooled = ConfusionMatrix::empty(label_set.clone());
    let mut all_true = Vec::with_capacity(links.len());
    let mut all_pred = Vec::with_capacity(links.len());
    let mut trials = Vec::new();
    let mut provenance = Vec::new();
    for (f, test_idx) in folds.iter().enumerate() {
        let train_idx = complement(test_idx, links.len());
        let train: Vec<IssueLink> = train_idx.iter().map(|&i| links[i].clone()).collect();
        let test: Vec<IssueLink> = test_idx.iter().map(|&i| links[i].clone()).collect();
        let fold_seed = derive_seed(config.seed, f as u64);
        let pipeline = fit_pipeline(
            &train,
            &table,
            config,
            &label_set,
            fold_seed,
            embeddings,
            shared.as_ref(),
        )?;
        let predicted = pipeline.predict(&test, &table)?;
        let truth: Vec<String> = test.iter().map(|l| l.label.clone()).collect();
        let score = weighted_f1(&truth, &predicted)?;
        pooled.accumulate(&confusion_matrix(&truth, &predicted, &label_set)?)?;
        fold_reports.push(FoldReport {
            fold: f,
            weighted_f1: score.weighted_f1,
            test_size: test.len(),
            classifier: pipeline.classifier.spec.clone(),
        });
        provenance.push(pipeline.encoders.text.provenance().cloned().unwrap_or_default());
        trials.push(pipeline.trials);
        all_true.extend(truth);
        all_pred.extend(predicted);
    }
    let pooled_scores = weighted_f1(&all_true, &all_pred)?;
    let mean = fold_reports.iter().map(|f| f.weighted_f1).sum::<f64>() / fold_reports.len() as f64;
    let report = EvalReport {
        weighted_f1: mean,
        per_label: pooled_scores.per_label,
        confusion: pooled,
        config: serde_json::to_value(config)?,
        seed: config.seed,
        folds: Some(fold_reports),
        split: None,
        timestamp: None,
    };
    Ok(ExperimentOutcome {
        report,
        trials,
        provenance,
        test_issues: BTreeSet::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::dataset;
    use crate::encoders::{LinkFeatureConfig, TextEncoderKind};
    use crate::experiments::metrics::majority_weighted_f1;
    use crate::learners::ClassifierKind;

    fn labelled(n_a: usize, n_b: usize) -> ProjectDataset {
        let n = n_a + n_b;
        let names: Vec<String> = (0..=n).map(|i| format!("P-{i}")).collect();
        let triples: Vec<(&str, &str, &str)> = (0..n)
            .map(|i| {
                (
                    names[i].as_str(),
                    names[i + 1].as_str(),
                    if i < n_a { "relates to" } else { "blocks" },
                )
            })
            .collect();
        dataset(n + 1, &triples)
    }

    #[test]
    fn sparse_labels_are_rejected_by_name() {
        let ds = labelled(10, 4);
        let cfg = ExperimentConfig::new(LinkFeatureConfig::new(TextEncoderKind::None, true).unwrap(), ClassifierKind::Zeror);
        match run_recovery_experiment::<f64>(&ds, &cfg, &NormalizationConfig::empty(), None) {
            Err(Error::TooFewInstances { label, count: 4, .. }) => assert_eq!(label, "blocks"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zeror_matches_the_majority_formula_and_tests_every_link_once() {
        let ds = labelled(20, 10);
        let cfg = ExperimentConfig::new(LinkFeatureConfig::new(TextEncoderKind::None, true).unwrap(), ClassifierKind::Zeror);
        let out = run_recovery_experiment::<f64>(&ds, &cfg, &NormalizationConfig::empty(), None).unwrap();
        let folds = out.report.folds.as_ref().unwrap();
        assert_eq!(folds.iter().map(|f| f.test_size).sum::<usize>(), 30);
        assert_eq!(out.report.confusion.total(), 30);
        for f in folds {
            // every fold holds 4 relates-to and 2 blocks links
            assert!((f.weighted_f1 - majority_weighted_f1(&[4, 2])).abs() < 1e-9);
        }
    }
}
