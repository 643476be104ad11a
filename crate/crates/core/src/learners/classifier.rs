//! Classifier specifications, training dispatch and prediction.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::forest::{argmax, ForestOptions, MaxFeatures, RandomForest};
use crate::learners::logistic::{LogisticOptions, LogisticRegression};
use crate::learners::neural::{NeuralNetwork, NeuralOptions};
use crate::learners::smote::{smote_oversample, RowOrigin};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Lr,
    Rf,
    Nn,
    Zeror,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Lr => "lr",
            ClassifierKind::Rf => "rf",
            ClassifierKind::Nn => "nn",
            ClassifierKind::Zeror => "zeror",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lr" => Ok(ClassifierKind::Lr),
            "rf" => Ok(ClassifierKind::Rf),
            "nn" => Ok(ClassifierKind::Nn),
            "zeror" => Ok(ClassifierKind::Zeror),
            other => Err(Error::invalid(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HyperKey {
    #[serde(rename = "SM_k")]
    SmoteK,
    #[serde(rename = "LR_c")]
    LrC,
    #[serde(rename = "RF_e")]
    RfEstimators,
    #[serde(rename = "RF_f")]
    RfMaxFeatures,
    #[serde(rename = "NN_a")]
    NnAlpha,
    #[serde(rename = "NN_dp")]
    NnDropout,
    #[serde(rename = "NN_e")]
    NnEpochs,
    #[serde(rename = "NN_lr")]
    NnLearningRate,
}

impl HyperKey {
    pub const ALL: [HyperKey; 8] = [
        HyperKey::SmoteK,
        HyperKey::LrC,
        HyperKey::RfEstimators,
        HyperKey::RfMaxFeatures,
        HyperKey::NnAlpha,
        HyperKey::NnDropout,
        HyperKey::NnEpochs,
        HyperKey::NnLearningRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HyperKey::SmoteK => "SM_k",
            HyperKey::LrC => "LR_c",
            HyperKey::RfEstimators => "RF_e",
            HyperKey::RfMaxFeatures => "RF_f",
            HyperKey::NnAlpha => "NN_a",
            HyperKey::NnDropout => "NN_dp",
            HyperKey::NnEpochs => "NN_e",
            HyperKey::NnLearningRate => "NN_lr",
        }
    }

    /// Keys that apply to `kind`, plus `SM_k` when oversampling.
    pub fn keys_for(kind: ClassifierKind, smote: bool) -> Vec<HyperKey> {
        let mut keys = match kind {
            ClassifierKind::Lr => vec![HyperKey::LrC],
            ClassifierKind::Rf => vec![HyperKey::RfEstimators, HyperKey::RfMaxFeatures],
            ClassifierKind::Nn => vec![
                HyperKey::NnAlpha,
                HyperKey::NnDropout,
                HyperKey::NnEpochs,
                HyperKey::NnLearningRate,
            ],
            ClassifierKind::Zeror => vec![],
        };
        if smote && kind != ClassifierKind::Zeror {
            keys.insert(0, HyperKey::SmoteK);
        }
        keys
    }

    pub fn legal_values(self) -> Vec<HyperValue> {
        let powers = |lo: i32, hi: i32| (lo..=hi).map(|e| HyperValue::Float(10f64.powi(e))).collect();
        match self {
            HyperKey::SmoteK => (1..=7).map(HyperValue::Int).collect(),
            HyperKey::LrC => powers(-2, 2),
            HyperKey::RfEstimators => [10, 100, 1000].into_iter().map(HyperValue::Int).collect(),
            HyperKey::RfMaxFeatures => ["log2", "sqrt"].into_iter().map(|s| HyperValue::Text(s.into())).collect(),
            HyperKey::NnAlpha => powers(-4, -1),
            HyperKey::NnDropout => [0.1, 0.25, 0.5].into_iter().map(HyperValue::Float).collect(),
            HyperKey::NnEpochs => [25, 50, 75, 100, 125].into_iter().map(HyperValue::Int).collect(),
            HyperKey::NnLearningRate => powers(-3, 0),
        }
    }

    pub fn default_value(self) -> HyperValue {
        match self {
            HyperKey::SmoteK => HyperValue::Int(5),
            HyperKey::LrC => HyperValue::Float(1.0),
            HyperKey::RfEstimators => HyperValue::Int(10),
            HyperKey::RfMaxFeatures => HyperValue::Text("sqrt".into()),
            HyperKey::NnAlpha => HyperValue::Float(1e-4),
            HyperKey::NnDropout => HyperValue::Float(0.5),
            HyperKey::NnEpochs => HyperValue::Int(25),
            HyperKey::NnLearningRate => HyperValue::Float(1e-3),
        }
    }
}

impl FromStr for HyperKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HyperKey::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown hyper-parameter `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Int(u64),
    Float(f64),
    Text(String),
}

impl HyperValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            HyperValue::Int(v) => Some(*v as f64),
            HyperValue::Float(v) => Some(*v),
            HyperValue::Text(_) => None,
        }
    }

    fn as_count(&self, key: HyperKey) -> Result<usize> {
        match self.as_f64() {
            Some(v) if v >= 1.0 && v.fract() == 0.0 => Ok(v as usize),
            _ => Err(Error::invalid(format!("{} must be a positive integer", key.name()))),
        }
    }

    fn as_real(&self, key: HyperKey) -> Result<f64> {
        self.as_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::invalid(format!("{} must be a number", key.name())))
    }
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Int(v) => write!(f, "{v}"),
            HyperValue::Float(v) => write!(f, "{v}"),
            HyperValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub hyper_params: BTreeMap<HyperKey, HyperValue>,
    pub smote_enabled: bool,
    pub seed: u64,
}

impl ClassifierSpec {
    /// The default value of every key relevant to `kind`.
    pub fn defaults(kind: ClassifierKind, smote_enabled: bool, seed: u64) -> Self {
        ClassifierSpec {
            kind,
            hyper_params: HyperKey::keys_for(kind, smote_enabled)
                .into_iter()
                .map(|k| (k, k.default_value()))
                .collect(),
            smote_enabled,
            seed,
        }
    }

    pub fn with(mut self, key: HyperKey, value: HyperValue) -> Self {
        self.hyper_params.insert(key, value);
        self
    }

    fn value(&self, key: HyperKey) -> HyperValue {
        self.hyper_params.get(&key).cloned().unwrap_or_else(|| key.default_value())
    }

    pub fn smote_k(&self) -> Result<usize> {
        self.value(HyperKey::SmoteK).as_count(HyperKey::SmoteK)
    }

    pub fn logistic_options(&self) -> Result<LogisticOptions> {
        Ok(LogisticOptions {
            c: self.value(HyperKey::LrC).as_real(HyperKey::LrC)?,
            ..Default::default()
        })
    }

    pub fn forest_options(&self) -> Result<ForestOptions> {
        let max_features = match self.value(HyperKey::RfMaxFeatures) {
            HyperValue::Text(s) if s == "log2" => MaxFeatures::Log2,
            HyperValue::Text(s) if s == "sqrt" => MaxFeatures::Sqrt,
            HyperValue::Text(s) if s == "all" => MaxFeatures::All,
            other => return Err(Error::invalid(format!("RF_f must be log2 or sqrt, got {other}"))),
        };
        Ok(ForestOptions {
            n_estimators: self.value(HyperKey::RfEstimators).as_count(HyperKey::RfEstimators)?,
            max_features,
            seed: self.seed,
            ..Default::default()
        })
    }

    pub fn neural_options(&self) -> Result<NeuralOptions> {
        Ok(NeuralOptions {
            alpha: self.value(HyperKey::NnAlpha).as_real(HyperKey::NnAlpha)?,
            dropout: self.value(HyperKey::NnDropout).as_real(HyperKey::NnDropout)?,
            epochs: self.value(HyperKey::NnEpochs).as_count(HyperKey::NnEpochs)?,
            learning_rate: self.value(HyperKey::NnLearningRate).as_real(HyperKey::NnLearningRate)?,
            seed: self.seed,
            ..Default::default()
        })
    }
}

/// Rows a classifier is actually fitted on: the input rows, followed by
/// SMOTE rows when oversampling is enabled.
#[derive(Debug, Clone)]
pub struct TrainingRows<T> {
    pub x: Matrix<T>,
    pub y: Vec<usize>,
    pub origin: Vec<RowOrigin>,
}

pub fn prepare_training_rows<T: Scalar>(spec: &ClassifierSpec, x: &Matrix<T>, y: &[usize]) -> Result<TrainingRows<T>> {
    let distinct = y.iter().collect::<std::collections::BTreeSet<_>>().len();
    if spec.smote_enabled && spec.kind != ClassifierKind::Zeror && distinct >= 2 {
        let out = smote_oversample(x, y, spec.smote_k()?, spec.seed)?;
        return Ok(TrainingRows {
            x: out.x,
            y: out.y,
            origin: out.origin,
        });
    }
    Ok(TrainingRows {
        x: x.clone(),
        y: y.to_vec(),
        origin: (0..y.len()).map(RowOrigin::Original).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"), rename_all = "lowercase", tag = "type")]
pub enum ModelParams<T: Scalar> {
    Lr(LogisticRegression<T>),
    Rf(RandomForest<T>),
    Nn(NeuralNetwork<T>),
    Zeror { majority: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct TrainedClassifier<T: Scalar> {
    pub spec: ClassifierSpec,
    pub label_set: Vec<String>,
    pub n_features: usize,
    pub params: ModelParams<T>,
}

/// Index of the most frequent class; the lowest index wins ties.
fn majority(y: &[usize], n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        counts[c] += 1;
    }
    argmax(&counts)
}

impl<T: Scalar> TrainedClassifier<T> {
    /// Trains on string labels; the label set is their sorted distinct values.
    pub fn train(spec: &ClassifierSpec, x: &Matrix<T>, labels: &[String]) -> Result<Self> {
        let mut label_set: Vec<String> = labels.to_vec();
        label_set.sort();
        label_set.dedup();
        let y: Vec<usize> = labels
            .iter()
            .map(|l| label_set.binary_search(l).expect("label drawn from the set"))
            .collect();
        Self::train_indexed(spec, x, &y, label_set)
    }

    /// Trains on class indices into `label_set`.
    pub fn train_indexed(spec: &ClassifierSpec, x: &Matrix<T>, y: &[usize], label_set: Vec<String>) -> Result<Self> {
        Ok(Self::train_traced(spec, x, y, label_set)?.0)
    }

    /// Like [`Self::train_indexed`], also returning the origin of every row
    /// the model was fitted on.
    pub fn train_traced(
        spec: &ClassifierSpec,
        x: &Matrix<T>,
        y: &[usize],
        label_set: Vec<String>,
    ) -> Result<(Self, Vec<RowOrigin>)> {
        if y.is_empty() {
            return Err(Error::invalid("no training rows"));
        }
        if x.rows() != y.len() {
            return Err(Error::invalid(format!("{} feature rows but {} labels", x.rows(), y.len())));
        }
        let k = label_set.len();
        if y.iter().any(|&c| c >= k) {
            return Err(Error::invalid("class index outside the label set"));
        }
        let mut origin: Vec<RowOrigin> = (0..y.len()).map(RowOrigin::Original).collect();
        let params = match spec.kind {
            ClassifierKind::Zeror => ModelParams::Zeror { majority: majority(y, k) },
            kind => {
                let distinct = y.iter().collect::<std::collections::BTreeSet<_>>().len();
                if distinct < 2 {
                    return Err(Error::invalid(format!("{kind} needs at least two labels in the training data")));
                }
                let rows = prepare_training_rows(spec, x, y)?;
                if rows.origin.iter().any(|o| matches!(o, RowOrigin::Duplicate(_))) {
                    warn!("a singleton class was duplicated instead of interpolated");
                }
                origin = rows.origin;
                match kind {
                    ClassifierKind::Lr => {
                        ModelParams::Lr(LogisticRegression::fit(&rows.x, &rows.y, k, &spec.logistic_options()?)?)
                    }
                    ClassifierKind::Rf => ModelParams::Rf(RandomForest::fit(&rows.x, &rows.y, k, &spec.forest_options()?)?),
                    ClassifierKind::Nn => ModelParams::Nn(NeuralNetwork::fit(&rows.x, &rows.y, k, &spec.neural_options()?)?),
                    ClassifierKind::Zeror => unreachable!(),
                }
            }
        };
        let model = TrainedClassifier {
            spec: spec.clone(),
            label_set,
            n_features: x.cols(),
            params,
        };
        Ok((model, origin))
    }

    pub fn kind(&self) -> ClassifierKind {
        self.spec.kind
    }

    pub fn predict_proba_row(&self, row: &[T]) -> Result<Vec<T>> {
        if row.len() != self.n_features {
            return Err(Error::WidthMismatch {
                expected: self.n_features,
                actual: row.len(),
            });
        }
        Ok(match &self.params {
            ModelParams::Lr(m) => m.predict_proba_row(row),
            ModelParams::Rf(m) => m.predict_proba_row(row),
            ModelParams::Nn(m) => m.predict_proba_row(row),
            ModelParams::Zeror { majority } => {
                let mut p = vec![T::zero(); self.label_set.len()];
                p[*majority] = T::one();
                p
            }
        })
    }

    pub fn predict_proba(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.n_features {
            return Err(Error::WidthMismatch {
                expected: self.n_features,
                actual: x.cols(),
            });
        }
        let mut out = Matrix::zeros(x.rows(), self.label_set.len());
        for (i, row) in x.iter_rows().enumerate() {
            out.row_mut(i).copy_from_slice(&self.predict_proba_row(row)?);
        }
        Ok(out)
    }

    pub fn predict_indices(&self, x: &Matrix<T>) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok(p.iter_rows().map(argmax).collect())
    }

    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<String>> {
        Ok(self
            .predict_indices(x)?
            .into_iter()
            .map(|c| self.label_set[c].clone())
            .collect())
    }
}
