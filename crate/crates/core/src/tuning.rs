//! Hyper-parameter space, stratified folds and random search.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::metrics::weighted_f1;
use crate::learners::{ClassifierKind, ClassifierSpec, HyperKey, HyperValue, TrainedClassifier};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const DEFAULT_TRIALS: usize = 20;
const INNER_FOLDS: usize = 5;

/// Legal values per hyper-parameter key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParamSpace {
    values: BTreeMap<HyperKey, Vec<HyperValue>>,
}

impl Default for HyperParamSpace {
    fn default() -> Self {
        HyperParamSpace {
            values: HyperKey::ALL.into_iter().map(|k| (k, k.legal_values())).collect(),
        }
    }
}

impl HyperParamSpace {
    /// Replaces the value set of `key`.
    pub fn with(mut self, key: HyperKey, values: Vec<HyperValue>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid(format!("{} needs at least one value", key.name())));
        }
        self.values.insert(key, values);
        Ok(self)
    }

    pub fn values(&self, key: HyperKey) -> &[HyperValue] {
        &self.values[&key]
    }
}

pub fn default_config(kind: ClassifierKind, smote_enabled: bool, seed: u64) -> ClassifierSpec {
    ClassifierSpec::defaults(kind, smote_enabled, seed)
}

/// Draws each key relevant to `kind` uniformly from its value set.
pub fn sample_config<R: Rng>(
    space: &HyperParamSpace,
    kind: ClassifierKind,
    smote_enabled: bool,
    seed: u64,
    rng: &mut R,
) -> ClassifierSpec {
    let mut spec = ClassifierSpec {
        kind,
        hyper_params: BTreeMap::new(),
        smote_enabled,
        seed,
    };
    for key in HyperKey::keys_for(kind, smote_enabled) {
        let choice = space.values(key).choose(rng).expect("value sets are non-empty");
        spec.hyper_params.insert(key, choice.clone());
    }
    spec
}

/// Splits row indices into `k` folds. Each class is shuffled and dealt
/// round-robin, continuing from where the previous class stopped, so
/// per-class counts across folds differ by at most one. Folds are sorted.
pub fn stratified_kfold<L: Ord>(y: &[L], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("stratified folds need k >= 2"));
    }
    if k > y.len() {
        return Err(Error::invalid(format!("cannot split {} rows into {k} folds", y.len())));
    }
    let mut classes: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, label) in y.iter().enumerate() {
        classes.entry(label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for members in classes.values_mut() {
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            folds[(offset + j) % k].push(i);
        }
        offset += members.len();
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Indices not in `fold`, given the sorted fold and the total count.
pub fn complement(fold: &[usize], n: usize) -> Vec<usize> {
    let held: BTreeSet<usize> = fold.iter().copied().collect();
    (0..n).filter(|i| !held.contains(i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub config: ClassifierSpec,
    pub score: f64,
    pub fold_scores: Vec<f64>,
    pub seconds: f64,
}

/// Outcome of training on one split and scoring the other.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub score: f64,
    /// Input rows that contributed to any fitted row, SMOTE neighbours
    /// included.
    pub fitted_inputs: BTreeSet<usize>,
}

/// Trains `spec` on `train` rows (oversampled if enabled) and returns the
/// weighted F1 on `validation` rows.
pub fn evaluate_split<T: Scalar>(
    spec: &ClassifierSpec,
    x: &Matrix<T>,
    y: &[usize],
    label_set: &[String],
    train: &[usize],
    validation: &[usize],
) -> Result<SplitOutcome> {
    let xt = x.select_rows(train);
    let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
    let (model, origin) = TrainedClassifier::train_traced(spec, &xt, &yt, label_set.to_vec())?;
    let fitted_inputs = origin.iter().flat_map(|o| o.inputs()).map(|i| train[i]).collect();
    let predicted = model.predict_indices(&x.select_rows(validation))?;
    let truth: Vec<usize> = validation.iter().map(|&i| y[i]).collect();
    Ok(SplitOutcome {
        score: weighted_f1(&truth, &predicted)?.weighted_f1,
        fitted_inputs,
    })
}

/// Validation splits used to score one trial: inner stratified CV for
/// `lr`/`rf`, a stratified 25% holdout for `nn`.
pub fn validation_splits(kind: ClassifierKind, y: &[usize], seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let (k, take) = match kind {
        ClassifierKind::Nn => (4, 1),
        _ => (INNER_FOLDS.min(y.len()), usize::MAX),
    };
    let folds = stratified_kfold(y, k, seed)?;
    Ok(folds
        .iter()
        .take(take)
        .map(|f| (complement(f, y.len()), f.clone()))
        .collect())
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub kind: ClassifierKind,
    pub smote_enabled: bool,
    pub n_trials: usize,
    pub seed: u64,
    /// Worker threads for trials; 1 runs them in order on this thread.
    pub jobs: usize,
}

fn run_trial<T: Scalar>(
    trial: usize,
    spec: ClassifierSpec,
    x: &Matrix<T>,
    y: &[usize],
    label_set: &[String],
    splits: &[(Vec<usize>, Vec<usize>)],
) -> TrialResult {
    let start = Instant::now();
    let mut fold_scores = Vec::with_capacity(splits.len());
    for (train, validation) in splits {
        let score = match evaluate_split(&spec, x, y, label_set, train, validation) {
            Ok(outcome) => outcome.score,
            Err(e) => {
                warn!("trial {trial} scored 0: {e}");
                0.0
            }
        };
        fold_scores.push(score);
    }
    TrialResult {
        trial,
        score: fold_scores.iter().sum::<f64>() / fold_scores.len() as f64,
        config: spec,
        fold_scores,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Random search over `space`. Trial `i` samples its configuration and
/// trains with seed `seed + i`; the best score wins, earliest trial first.
pub fn tune_random_search<T: Scalar>(
    x: &Matrix<T>,
    y: &[usize],
    label_set: &[String],
    space: &HyperParamSpace,
    options: &SearchOptions,
) -> Result<(ClassifierSpec, Vec<TrialResult>)> {
    if options.n_trials == 0 {
        return Err(Error::invalid("random search needs at least one trial"));
    }
    let splits = validation_splits(options.kind, y, options.seed)?;
    let spec_for = |i: usize| {
        let trial_seed = options.seed.wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        sample_config(space, options.kind, options.smote_enabled, trial_seed, &mut rng)
    };
    let trials: Vec<TrialResult> = if options.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.jobs)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
        pool.install(|| {
            (0..options.n_trials)
                .into_par_iter()
                .map(|i| run_trial(i, spec_for(i), x, y, label_set, &splits))
                .collect()
        })
    } else {
        (0..options.n_trials)
            .map(|i| run_trial(i, spec_for(i), x, y, label_set, &splits))
            .collect()
    };
    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.score > trials[best].score {
            best = i;
        }
    }
    Ok((trials[best].config.clone(), trials))
}

#[derive(Serialize)]
struct TrialLine<'a> {
    trial: usize,
    config: &'a ClassifierSpec,
    score: f64,
    seconds: f64,
}

/// One JSON object per line: `{trial, config, score, seconds}`.
pub fn write_trial_log<W: Write>(mut out: W, trials: &[TrialResult]) -> Result<()> {
    for t in trials {
        let line = TrialLine {
            trial: t.trial,
            config: &t.config,
            score: t.score,
            seconds: t.seconds,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n").map_err(|e| Error::io("<trial log>", e))?;
    }
    Ok(())
}
