//! Recovery (cross-validated) and prediction (time split) experiments,
//! reports, model bundles and label suggestion.

pub mod bundle;
pub mod metrics;
pub mod prediction;
pub mod recovery;
pub mod report;

use std::collections::BTreeSet;

use serde::Serialize;

use crate::dataset::IssueLink;
use crate::encoders::{EmbeddingSource, FittedEncoders, IssueTable, LinkFeatureConfig};
use crate::error::{Error, Result};
use crate::learners::{ClassifierKind, ClassifierSpec, TrainedClassifier};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::tuning::{tune_random_search, HyperParamSpace, SearchOptions, TrialResult};

pub use bundle::{suggest_label, ModelBundle, BUNDLE_FORMAT_VERSION};
pub use metrics::{confusion_matrix, majority_weighted_f1, weighted_f1, ConfusionMatrix, F1Summary, LabelScore};
pub use prediction::{run_prediction_experiment, time_split, TimeSplit, TimeSplitSpec};
pub use recovery::{run_recovery_experiment, MIN_LABEL_INSTANCES, OUTER_FOLDS};
pub use report::{EvalReport, FoldReport, ReportFormat, SplitReport};

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub features: LinkFeatureConfig,
    pub model: ClassifierKind,
    pub smote: bool,
    /// Random-search trials; `None` trains with the default values.
    pub tune: Option<usize>,
    pub seed: u64,
    /// Fit the encoders once on every link instead of per training split.
    pub fit_encoders_once: bool,
    pub jobs: usize,
    #[serde(skip)]
    pub space: HyperParamSpace,
}

impl ExperimentConfig {
    pub fn new(features: LinkFeatureConfig, model: ClassifierKind) -> Self {
        ExperimentConfig {
            features,
            model,
            smote: false,
            tune: None,
            seed: 0,
            fit_encoders_once: false,
            jobs: 1,
            space: HyperParamSpace::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    /// Random-search trials of each fitted pipeline.
    pub trials: Vec<Vec<TrialResult>>,
    /// Issue ids whose text informed each fitted text encoder.
    pub provenance: Vec<BTreeSet<String>>,
    /// Issues of the test window; empty in recovery mode.
    pub test_issues: BTreeSet<String>,
}

/// Independent stream seed derived from a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Encoders and classifier fitted on one set of training links.
#[derive(Debug, Clone)]
pub struct FittedPipeline<T: Scalar> {
    pub encoders: FittedEncoders<T>,
    pub classifier: TrainedClassifier<T>,
    pub trials: Vec<TrialResult>,
}

impl<T: Scalar> FittedPipeline<T> {
    pub fn predict(&self, links: &[IssueLink], table: &IssueTable<'_>) -> Result<Vec<String>> {
        let x = self.encoders.encode_links(links, table)?;
        self.classifier.predict(&x)
    }
}

fn class_indices(links: &[IssueLink], label_set: &[String]) -> Result<Vec<usize>> {
    links
        .iter()
        .map(|l| {
            label_set
                .binary_search(&l.label)
                .map_err(|_| Error::UnknownLabel(l.label.clone()))
        })
        .collect()
}

/// Fits encoders (unless `encoders` is given), tunes if requested and
/// trains the classifier on `train_links`.
pub fn fit_pipeline<T: Scalar>(
    train_links: &[IssueLink],
    table: &IssueTable<'_>,
    config: &ExperimentConfig,
    label_set: &[String],
    seed: u64,
    embeddings: Option<&EmbeddingSource<'_, T>>,
    encoders: Option<&FittedEncoders<T>>,
) -> Result<FittedPipeline<T>> {
    let encoders = match encoders {
        Some(e) => e.clone(),
        None => FittedEncoders::fit(config.features, train_links, table, embeddings)?,
    };
    let x: Matrix<T> = encoders.encode_links(train_links, table)?;
    let y = class_indices(train_links, label_set)?;
    let (spec, trials) = match config.tune {
        Some(n_trials) => {
            let options = SearchOptions {
                kind: config.model,
                smote_enabled: config.smote,
                n_trials,
                seed,
                jobs: config.jobs,
            };
            tune_random_search(&x, &y, label_set, &config.space, &options)?
        }
        None => (ClassifierSpec::defaults(config.model, config.smote, seed), Vec::new()),
    };
    let classifier = TrainedClassifier::train_indexed(&spec, &x, &y, label_set.to_vec())?;
    Ok(FittedPipeline {
        encoders,
        classifier,
        trials,
    })
}
