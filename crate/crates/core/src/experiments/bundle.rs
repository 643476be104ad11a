//! Persisted model bundles and label suggestion for a new issue pair.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Issue, ProjectDataset};
use crate::encoders::{EmbeddingSource, IssueTable};
use crate::error::{Error, Result};
use crate::experiments::{derive_seed, fit_pipeline, ExperimentConfig, FittedPipeline};
use crate::encoders::FittedEncoders;
use crate::learners::{ClassifierSpec, TrainedClassifier};
use crate::scalar::Scalar;
use crate::textprep::{preprocess_issue, NormalizationConfig};
use crate::tuning::TrialResult;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Everything needed to label a new link: normalization tables, fitted
/// encoders and the trained classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct ModelBundle<T: Scalar> {
    pub format_version: u32,
    pub spec: ClassifierSpec,
    pub label_set: Vec<String>,
    pub normalization: NormalizationConfig,
    pub encoders: FittedEncoders<T>,
    pub classifier: TrainedClassifier<T>,
}

impl<T: Scalar> ModelBundle<T> {
    pub fn new(pipeline: FittedPipeline<T>, normalization: NormalizationConfig) -> Self {
        ModelBundle {
            format_version: BUNDLE_FORMAT_VERSION,
            spec: pipeline.classifier.spec.clone(),
            label_set: pipeline.classifier.label_set.clone(),
            normalization,
            encoders: pipeline.encoders,
            classifier: pipeline.classifier,
        }
    }

    /// Trains on every link of `dataset`, tuning first if configured.
    pub fn train(
        dataset: &ProjectDataset,
        config: &ExperimentConfig,
        normalization: &NormalizationConfig,
        embeddings: Option<&EmbeddingSource<'_, T>>,
    ) -> Result<(Self, Vec<TrialResult>)> {
        let label_set = dataset.labels();
        let table = IssueTable::new(dataset, normalization);
        let mut pipeline = fit_pipeline(
            &dataset.links,
            &table,
            config,
            &label_set,
            derive_seed(config.seed, 0),
            embeddings,
            None,
        )?;
        let trials = std::mem::take(&mut pipeline.trials);
        Ok((Self::new(pipeline, normalization.clone()), trials))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let bundle: Self = serde_json::from_slice(bytes)?;
        if bundle.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model bundle version {}",
                bundle.format_version
            )));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Class probabilities for a link from `a` to `b`, in label-set order.
    pub fn predict_proba(&self, a: &Issue, b: &Issue) -> Result<Vec<f64>> {
        let ta = preprocess_issue(a, &self.normalization);
        let tb = preprocess_issue(b, &self.normalization);
        let row = self.encoders.encode_pair((a, &ta), (b, &tb));
        Ok(self
            .classifier
            .predict_proba_row(&row)?
            .into_iter()
            .map(|p| p.as_f64())
            .collect())
    }
}

/// The `top_k` most probable labels for a link from `a` to `b`, most
/// probable first; equal probabilities keep label order.
pub fn suggest_label<T: Scalar>(
    bundle: &ModelBundle<T>,
    a: &Issue,
    b: &Issue,
    top_k: usize,
) -> Result<Vec<(String, f64)>> {
    if top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    let probs = bundle.predict_proba(a, b)?;
    let mut ranked: Vec<(String, f64)> = bundle.classifier.label_set.iter().cloned().zip(probs).collect();
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1));
    ranked.truncate(top_k);
    Ok(ranked)
}
