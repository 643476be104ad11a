use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use linklab::cli::run;
use linklab::dataset::{IssueLink, LabelFilterPolicy, ProjectDataset};
use linklab::encoders::{
    cosine, encode_issue_tfidf, finetune_embeddings, fit_tfidf, train_embeddings, EmbeddingModel, EmbeddingParams,
    FinetuneParams, FittedEncoders, IssueTable, LinkFeatureConfig, TextEncoderKind, TextEncoding, TfidfModel,
    TOY_CORPUS,
};
use linklab::experiments::{
    confusion_matrix, run_prediction_experiment, time_split, weighted_f1, ExperimentConfig, TimeSplitSpec,
};
use linklab::learners::{
    smote_oversample, ClassifierKind, ClassifierSpec, LogisticRegression, NeuralNetwork, RowOrigin,
    TrainedClassifier,
};
use linklab::matrix::Matrix;
use linklab::textprep::{corpus_sentences, preprocess_issue, NormalizationConfig, TokenizedIssue};
use linklab::tuning::{evaluate_split, stratified_kfold, validation_splits};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

/// Criteria share one CPU budget; timing them one at a time keeps each
/// measurement free of the others.
fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

struct Verdict {
    criterion: usize,
    name: &'static str,
    limit: Duration,
    start: Instant,
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Verdict {
    fn new(criterion: usize, name: &'static str, limit_secs: u64) -> Self {
        Verdict {
            criterion,
            name,
            limit: Duration::from_secs(limit_secs),
            start: Instant::now(),
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Display) {
        if !ok {
            self.failures.push(what.to_string());
        }
    }

    fn note(&mut self, what: impl Display) {
        self.notes.push(what.to_string());
    }

    /// Prints the verdict line and fails the test on any violation.
    fn finish_with(mut self, elapsed: Duration) {
        if elapsed > self.limit {
            self.failures.push(format!(
                "runtime {:.1}s over the {}s limit",
                elapsed.as_secs_f64(),
                self.limit.as_secs()
            ));
        }
        let status = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        let mut detail = self.notes.join("; ");
        if !self.failures.is_empty() {
            detail = format!("{detail}; violations: {}", self.failures.join("; "));
        }
        println!(
            "{status} criterion {} ({}): {detail}; {:.2}s (limit {}s)",
            self.criterion,
            self.name,
            elapsed.as_secs_f64(),
            self.limit.as_secs()
        );
        assert!(self.failures.is_empty(), "criterion {} failed: {}", self.criterion, self.failures.join("; "));
    }

    fn finish(self) {
        let elapsed = self.start.elapsed();
        self.finish_with(elapsed);
    }
}

// Link label occurrences per project.
const AMBARI: &[(&str, usize)] = &[
    ("relates to", 310),
    ("duplicates", 305),
    ("blocks", 89),
    ("depends upon", 70),
    ("requires", 38),
    ("contains", 27),
    ("is a clone of", 27),
    ("breaks", 26),
    ("incorporates", 21),
    ("supercedes", 15),
    ("causes", 6),
    ("Blocked", 5),
    ("is a parent of", 2),
    ("Dependent", 1),
];

const FLEX: &[(&str, usize)] = &[
    ("relates to", 94),
    ("duplicates", 51),
    ("blocks", 20),
    ("depends upon", 13),
    ("requires", 20),
    ("contains", 2),
    ("is a clone of", 23),
    ("breaks", 14),
    ("incorporates", 8),
    ("supercedes", 2),
];

const HIVE: &[(&str, usize)] = &[
    ("relates to", 3060),
    ("duplicates", 708),
    ("blocks", 717),
    ("depends upon", 373),
    ("requires", 134),
    ("contains", 103),
    ("is a clone of", 71),
    ("breaks", 190),
    ("incorporates", 339),
    ("supercedes", 84),
    ("causes", 11),
    ("Blocked", 11),
    ("is a parent of", 3),
    ("Dependent", 5),
    ("Dependency", 1),
    ("Parent Feature", 1),
];

fn dataset_with_counts(counts: &[(&str, usize)]) -> ProjectDataset {
    let mut ds = ProjectDataset::new("P");
    let mut k = 0;
    for &(label, n) in counts {
        for _ in 0..n {
            ds.links.push(IssueLink::new(format!("P-{k}"), format!("P-{}", k + 1), label));
            k += 1;
        }
    }
    ds
}

/// Majority-class weighted F1 after keeping labels with at least 20 links
/// and at least 1% of all links: precision p, recall 1, weight p.
fn analytic_majority_f1(counts: &[(&str, usize)]) -> f64 {
    let total: usize = counts.iter().map(|c| c.1).sum();
    let kept: Vec<usize> = counts
        .iter()
        .map(|c| c.1)
        .filter(|&c| c >= 20 && c as f64 / total as f64 >= 0.01)
        .collect();
    let p = *kept.iter().max().unwrap() as f64 / kept.iter().sum::<usize>() as f64;
    let f1 = 2.0 * p / (p + 1.0);
    p * f1
}

#[test]
fn majority_baseline_reproduction() {
    let _guard = serial();
    let mut v = Verdict::new(1, "label filter and majority baseline", 1);
    let mut produced = Vec::new();
    for (name, counts, expected) in [("ambari", AMBARI, 0.172), ("flex", FLEX, 0.281), ("hive", HIVE, 0.367)] {
        let filtered = linklab::dataset::filter_labels(&dataset_with_counts(counts), &LabelFilterPolicy::default());
        let labels: Vec<String> = filtered.links.iter().map(|l| l.label.clone()).collect();
        let x = Matrix::<f64>::zeros(labels.len(), 1);
        let spec = ClassifierSpec::defaults(ClassifierKind::Zeror, false, 0);
        let model = TrainedClassifier::train(&spec, &x, &labels).unwrap();
        let predicted = model.predict(&x).unwrap();
        let f1 = weighted_f1(&labels, &predicted).unwrap().weighted_f1;
        let analytic = analytic_majority_f1(counts);
        v.check((f1 - analytic).abs() < 1e-12, format!("{name}: trained {f1} vs analytic {analytic}"));
        v.check((f1 - expected).abs() <= 5e-4, format!("{name}: {f1:.4} vs {expected}"));
        v.note(format!("{name} {f1:.4}"));
        produced.push(f1);
    }
    for expected in [0.367, 0.281, 0.172] {
        v.check(
            produced.iter().any(|f| (f - expected).abs() <= 5e-4),
            format!("{expected} missing from the produced set"),
        );
    }
    v.finish();
}

#[test]
fn metric_oracle() {
    let _guard = serial();
    let mut v = Verdict::new(2, "weighted F1 and confusion matrix oracle", 5);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let names = ["a", "b", "c", "d", "e", "f"];
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.gen_range(1..=6);
        let n = rng.gen_range(1..=80);
        let y_true: Vec<String> = (0..n).map(|_| names[rng.gen_range(0..k)].to_string()).collect();
        let y_pred: Vec<String> = (0..n).map(|_| names[rng.gen_range(0..k)].to_string()).collect();
        let summary = weighted_f1(&y_true, &y_pred).unwrap();
        let labels: BTreeSet<&String> = y_true.iter().chain(&y_pred).collect();
        let mut weighted = 0.0;
        for &label in &labels {
            let tp = y_true.iter().zip(&y_pred).filter(|(t, p)| *t == label && *p == label).count() as f64;
            let fp = y_true.iter().zip(&y_pred).filter(|(t, p)| *t != label && *p == label).count() as f64;
            let fn_ = y_true.iter().zip(&y_pred).filter(|(t, p)| *t == label && *p != label).count() as f64;
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            weighted += (tp + fn_) * f1;
            let got = summary.per_label[label];
            for (a, b) in [(got.precision, precision), (got.recall, recall), (got.f1, f1)] {
                worst = worst.max((a - b).abs());
            }
            v.check(got.support as f64 == tp + fn_, format!("support of {label}"));
        }
        weighted /= n as f64;
        worst = worst.max((summary.weighted_f1 - weighted).abs());

        let order: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        let cm = confusion_matrix(&y_true, &y_pred, &order).unwrap();
        for (i, row_label) in order.iter().enumerate() {
            for (j, col_label) in order.iter().enumerate() {
                let expected = y_true
                    .iter()
                    .zip(&y_pred)
                    .filter(|(t, p)| *t == row_label && *p == col_label)
                    .count() as u64;
                v.check(cm.counts[i][j] == expected, format!("confusion cell ({row_label}, {col_label})"));
            }
        }
    }
    v.check(worst <= 1e-12, format!("max deviation {worst:e}"));
    v.note(format!("1000 pairs, max deviation {worst:e}"));
    v.finish();
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` with central
/// differences of step `h`.
fn gradient_error(f: impl Fn(&[f64]) -> (f64, Vec<f64>), point: &[f64], h: f64) -> f64 {
    let analytic = f(point).1;
    let mut shifted = point.to_vec();
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for i in 0..point.len() {
        shifted[i] = point[i] + h;
        let up = f(&shifted).0;
        shifted[i] = point[i] - h;
        let down = f(&shifted).0;
        shifted[i] = point[i];
        let numeric = (up - down) / (2.0 * h);
        diff += (analytic[i] - numeric).powi(2);
        na += analytic[i].powi(2);
        nn += numeric.powi(2);
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(f64::MIN_POSITIVE)
}

#[test]
fn gradient_correctness() {
    let _guard = serial();
    let mut v = Verdict::new(3, "analytic gradients", 10);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, d, k, hidden) = (10, 8, 3, 6);
    let mut worst_lr: f64 = 0.0;
    let mut worst_nn: f64 = 0.0;
    for _ in 0..20 {
        let x = random_matrix(&mut rng, n, d);
        let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let c = 10f64.powi(rng.gen_range(-2..=2));
        let lr_point: Vec<f64> = (0..k * d + k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lr = |p: &[f64]| LogisticRegression::from_params(d, k, p.to_vec()).unwrap().objective(&x, &y, c);
        worst_lr = worst_lr.max(gradient_error(lr, &lr_point, 1e-5));

        let alpha = 10f64.powi(rng.gen_range(-4..=-1));
        let nn_point: Vec<f64> = (0..NeuralNetwork::<f64>::param_count(d, hidden, k))
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let nn = |p: &[f64]| {
            NeuralNetwork::from_params(d, hidden, k, p.to_vec())
                .unwrap()
                .objective(&x, &y, alpha)
        };
        worst_nn = worst_nn.max(gradient_error(nn, &nn_point, 1e-5));
    }
    v.check(worst_lr <= 1e-5, format!("LR relative error {worst_lr:e}"));
    v.check(worst_nn <= 1e-4, format!("NN relative error {worst_nn:e}"));
    v.note(format!("LR worst {worst_lr:.2e}, NN worst {worst_nn:.2e}"));
    v.finish();
}

fn distance_to_segment(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 == 0.0 {
        0.0
    } else {
        (p.iter().zip(a).zip(&ab).map(|((p, a), d)| (p - a) * d).sum::<f64>() / len2).clamp(0.0, 1.0)
    };
    p.iter()
        .zip(a)
        .zip(&ab)
        .map(|((p, a), d)| (p - (a + t * d)).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn squared(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

#[test]
fn smote_geometry() {
    let _guard = serial();
    let mut v = Verdict::new(4, "SMOTE geometry", 10);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut synthetic_rows = 0;
    for trial in 0..500 {
        let dims = rng.gen_range(1..=5);
        let n_classes = rng.gen_range(2..=4);
        let sizes: Vec<usize> = (0..n_classes)
            .map(|c| if c == 0 { rng.gen_range(10..=40) } else { rng.gen_range(2..=12) })
            .collect();
        let mut y = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            y.extend(std::iter::repeat_n(c, s));
        }
        y.shuffle(&mut rng);
        let x = random_matrix(&mut rng, y.len(), dims);
        let k = rng.gen_range(1..=7);
        let out = smote_oversample(&x, &y, k, trial).unwrap();
        let n = y.len();
        let target = *sizes.iter().max().unwrap();
        for c in 0..n_classes {
            let count = out.y.iter().filter(|&&l| l == c).count();
            v.check(count == target, format!("trial {trial}: class {c} has {count}, want {target}"));
        }
        for i in 0..n {
            v.check(out.x.row(i) == x.row(i) && out.y[i] == y[i], format!("trial {trial}: original row {i} changed"));
        }
        for r in n..out.y.len() {
            let RowOrigin::Synthetic { source, neighbor, .. } = out.origin[r] else {
                v.check(false, format!("trial {trial}: row {r} is not synthetic"));
                continue;
            };
            synthetic_rows += 1;
            let class = out.y[r];
            v.check(y[source] == class && y[neighbor] == class, format!("trial {trial}: cross-class segment"));
            let mut dist: Vec<f64> = (0..n)
                .filter(|&m| m != source && y[m] == class)
                .map(|m| squared(x.row(source), x.row(m)))
                .collect();
            dist.sort_by(f64::total_cmp);
            let k_eff = k.min(dist.len());
            let to_neighbor = squared(x.row(source), x.row(neighbor));
            v.check(
                neighbor != source && to_neighbor <= dist[k_eff - 1],
                format!("trial {trial}: neighbor outside the {k_eff} nearest"),
            );
            worst = worst.max(distance_to_segment(out.x.row(r), x.row(source), x.row(neighbor)));
        }
    }
    v.check(worst <= 1e-9, format!("max distance to segment {worst:e}"));
    v.note(format!("{synthetic_rows} synthetic rows, max distance {worst:.1e}"));
    v.finish();
}

#[test]
fn stratified_folds() {
    let _guard = serial();
    let mut v = Verdict::new(5, "stratified folds", 2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..200 {
        let n = rng.gen_range(5..=300);
        let n_classes = rng.gen_range(1..=8);
        let weights: Vec<f64> = (0..n_classes).map(|_| rng.gen_range(0.05..1.0f64).powi(3)).collect();
        let total: f64 = weights.iter().sum();
        let y: Vec<usize> = (0..n)
            .map(|_| {
                let mut u = rng.gen_range(0.0..total);
                weights
                    .iter()
                    .position(|w| {
                        u -= w;
                        u < 0.0
                    })
                    .unwrap_or(n_classes - 1)
            })
            .collect();
        let folds = stratified_kfold(&y, 5, trial).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        v.check(all == (0..n).collect::<Vec<_>>() && folds.len() == 5, format!("trial {trial}: not a partition"));
        for c in 0..n_classes {
            let per_fold: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| y[i] == c).count()).collect();
            let spread = per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap();
            v.check(spread <= 1, format!("trial {trial}: class {c} fold counts {per_fold:?}"));
        }
    }
    v.note("200 label vectors, k = 5");
    v.finish();
}

/// Smoothed-idf TF-IDF over summary and description documents, each half
/// L2-normalized.
fn direct_tfidf(corpus: &[TokenizedIssue], issue: &TokenizedIssue) -> Vec<f64> {
    let docs: Vec<&Vec<String>> = corpus.iter().flat_map(|i| [&i.summary_tokens, &i.description_tokens]).collect();
    let vocabulary: Vec<&String> = docs.iter().flat_map(|d| d.iter()).collect::<BTreeSet<_>>().into_iter().collect();
    let n = docs.len() as f64;
    let idf: Vec<f64> = vocabulary
        .iter()
        .map(|t| {
            let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
            ((1.0 + n) / (1.0 + df)).ln() + 1.0
        })
        .collect();
    let half = |tokens: &[String]| {
        let raw: Vec<f64> = vocabulary
            .iter()
            .zip(&idf)
            .map(|(t, w)| tokens.iter().filter(|x| x == t).count() as f64 * w)
            .collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        raw.into_iter().map(|v| if norm > 0.0 { v / norm } else { 0.0 }).collect::<Vec<_>>()
    };
    let mut out = half(&issue.summary_tokens);
    out.extend(half(&issue.description_tokens));
    out
}

fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

#[test]
fn tfidf_oracle() {
    let _guard = serial();
    let mut v = Verdict::new(6, "TF-IDF oracle", 2);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let words = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa"];
    let mut worst: f64 = 0.0;
    for c in 0..100 {
        let corpus: Vec<TokenizedIssue> = (0..rng.gen_range(1..=8))
            .map(|i| {
                let mut doc = |max: usize| -> Vec<String> {
                    (0..rng.gen_range(0..=max)).map(|_| words[rng.gen_range(0..words.len())].to_string()).collect()
                };
                TokenizedIssue {
                    id: format!("C{c}-{i}"),
                    summary_tokens: doc(6),
                    description_tokens: doc(15),
                }
            })
            .collect();
        if corpus.iter().all(|i| i.summary_tokens.is_empty() && i.description_tokens.is_empty()) {
            continue;
        }
        let model = fit_tfidf(&corpus).unwrap();
        for issue in &corpus {
            let got: Vec<f64> = encode_issue_tfidf(&model, issue);
            let want = direct_tfidf(&corpus, issue);
            v.check(got.len() == want.len(), format!("corpus {c}: width {} vs {}", got.len(), want.len()));
            for (a, b) in got.iter().zip(&want) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    v.check(worst <= 1e-9, format!("max deviation {worst:e}"));

    let d1 = tokens("a b");
    let d2 = tokens("a c");
    let model = TfidfModel::fit_documents([d1.as_slice(), d2.as_slice()]).unwrap();
    let vector: Vec<f64> = model.transform_document(&d1);
    let expected = [0.5797, 0.8148, 0.0];
    v.check(
        vector.len() == 3 && vector.iter().zip(expected).all(|(a, b)| (a - b).abs() <= 1e-4),
        format!("worked example {vector:?}"),
    );
    v.note(format!("100 corpora, max deviation {worst:.1e}, d1 = {vector:.4?}"));
    v.finish();
}

fn linklab(args: &[&str]) -> i32 {
    let mut argv = vec!["linklab"];
    argv.extend_from_slice(args);
    run(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Timed {
    bytes: Vec<u8>,
    seconds: f64,
}

/// One pass of the end-to-end commands on freshly generated data.
struct Pass {
    dataset: Vec<u8>,
    control_dataset: Vec<u8>,
    recover: Timed,
    control: Timed,
    sixty: Timed,
    eighty: Timed,
}

const RECOVER_FLAGS: &[&str] = &[
    "--encoder", "tfidf", "--meta", "--model", "rf", "--tune", "10", "--seed", "7", "--no-timestamp",
];

fn timed(args: &[&str], out: &Path) -> Timed {
    let start = Instant::now();
    let mut argv = args.to_vec();
    argv.extend(["--out", s(out)]);
    assert_eq!(linklab(&argv), 0, "linklab {}", args.join(" "));
    Timed {
        seconds: start.elapsed().as_secs_f64(),
        bytes: std::fs::read(out).unwrap(),
    }
}

/// Every pass runs in the same directory, so repeated runs see identical
/// arguments.
fn end_to_end_pass() -> Pass {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("end-to-end");
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    let data = dir.join("synth.json");
    let control_data = dir.join("synth-shuffled.json");
    let synth = ["synth", "--issues", "1500", "--labels", "5", "--noise", "0.1", "--seed", "7"];
    assert_eq!(linklab(&[&synth[..], &["--out", s(&data)]].concat()), 0);
    assert_eq!(linklab(&[&synth[..], &["--shuffle-labels", "--out", s(&control_data)]].concat()), 0);

    let recover = |d: &Path, name: &str| {
        let args = [&["recover", "--data", s(d)][..], RECOVER_FLAGS].concat();
        timed(&args, &dir.join(name))
    };
    let predict = |split: &str, name: &str| {
        let args = [&["predict-future", "--data", s(&data), "--split", split, "--smote"][..], RECOVER_FLAGS].concat();
        timed(&args, &dir.join(name))
    };
    let recovered = recover(&data, "recover.json");
    let control = recover(&control_data, "control.json");
    let sixty = predict("60-20", "sixty.json");
    let eighty = predict("80-20", "eighty.json");
    Pass {
        dataset: std::fs::read(&data).unwrap(),
        control_dataset: std::fs::read(&control_data).unwrap(),
        recover: recovered,
        control,
        sixty,
        eighty,
    }
}

fn first_pass() -> &'static Pass {
    static PASS: OnceLock<Pass> = OnceLock::new();
    PASS.get_or_init(end_to_end_pass)
}

fn report_f1(run: &Timed) -> f64 {
    let report: Value = serde_json::from_slice(&run.bytes).unwrap();
    report["weighted_f1"].as_f64().unwrap()
}

/// Majority baseline of a stored dataset after the default label filter.
fn dataset_majority_f1(bytes: &[u8]) -> f64 {
    let ds = ProjectDataset::from_json_bytes(bytes).unwrap();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &ds.links {
        *counts.entry(&l.label).or_default() += 1;
    }
    let pairs: Vec<(&str, usize)> = counts.into_iter().collect();
    analytic_majority_f1(&pairs)
}

#[test]
fn end_to_end_recovery_signal() {
    let _guard = serial();
    let pass = first_pass();
    let mut v = Verdict::new(7, "end-to-end recovery signal", 300);
    let zeror = dataset_majority_f1(&pass.dataset);
    let control_zeror = dataset_majority_f1(&pass.control_dataset);
    let f1 = report_f1(&pass.recover);
    let control = report_f1(&pass.control);
    v.check(f1 >= zeror + 0.25, format!("F1 {f1:.4} below majority {zeror:.4} + 0.25"));
    v.check(
        (control - control_zeror).abs() <= 0.10,
        format!("shuffled control {control:.4} vs majority {control_zeror:.4}"),
    );
    v.note(format!(
        "F1 {f1:.4} vs majority {zeror:.4}; shuffled control {control:.4} vs {control_zeror:.4} ({:.1}s)",
        pass.control.seconds
    ));
    v.finish_with(Duration::from_secs_f64(pass.recover.seconds));
}

/// A lowercase letters-only word unique to `i` that normalization keeps intact.
fn marker_word(i: usize) -> String {
    let mut word = String::from("zqx");
    let mut n = i;
    loop {
        word.push((b'a' + (n % 26) as u8) as char);
        n /= 26;
        if n == 0 {
            break word;
        }
    }
}

fn test_only_tokens(ds: &ProjectDataset, split_train: &BTreeSet<String>, test: &BTreeSet<String>, norm: &NormalizationConfig) -> BTreeSet<String> {
    let tokens_of = |ids: &BTreeSet<String>| -> BTreeSet<String> {
        ds.issues
            .iter()
            .filter(|i| ids.contains(&i.id))
            .flat_map(|i| preprocess_issue(i, norm).all_tokens().map(str::to_string).collect::<Vec<_>>())
            .collect()
    };
    let before = tokens_of(split_train);
    tokens_of(test).difference(&before).cloned().collect()
}

#[test]
fn prediction_protocol() {
    let _guard = serial();
    let pass = first_pass();
    let mut v = Verdict::new(8, "prediction protocol and leakage", 300);
    let start = Instant::now();
    let sixty = report_f1(&pass.sixty);
    let eighty = report_f1(&pass.eighty);
    v.check(eighty >= sixty - 0.05, format!("80-20 F1 {eighty:.4} < 60-20 F1 {sixty:.4} - 0.05"));
    v.note(format!("60-20 {sixty:.4}, 80-20 {eighty:.4}"));

    let mut ds = linklab::dataset::filter_labels(&ProjectDataset::from_json_bytes(&pass.dataset).unwrap(), &LabelFilterPolicy::default());
    for (i, issue) in ds.issues.iter_mut().enumerate() {
        issue.description.push(' ');
        issue.description.push_str(&marker_word(i));
    }
    let norm = NormalizationConfig::default();
    let table = IssueTable::new(&ds, &norm);
    let features = LinkFeatureConfig::new(TextEncoderKind::Tfidf, true).unwrap();
    let mut synthetic = 0;
    for spec in [TimeSplitSpec::SIXTY_TWENTY, TimeSplitSpec::EIGHTY_TWENTY] {
        let split = time_split(&ds, spec);
        let encoders = FittedEncoders::<f64>::fit(features, &split.train, &table, None).unwrap();
        let TextEncoding::Tfidf(model) = &encoders.text else {
            panic!("tfidf encoder expected");
        };
        v.check(
            model.fitted_on().is_disjoint(&split.test_issues),
            format!("{spec}: encoder fitted on test-window issues"),
        );
        let unseen = test_only_tokens(&ds, &split.train_issues, &split.test_issues, &norm);
        let leaked: Vec<&str> = model.vocabulary().filter(|t| unseen.contains(*t)).collect();
        v.check(leaked.is_empty(), format!("{spec}: test-only tokens in vocabulary: {leaked:?}"));
        v.check(!unseen.is_empty(), format!("{spec}: no test-only tokens to check"));
        let train_markers = model.vocabulary().filter(|t| t.starts_with("zqx")).count();
        v.check(train_markers > 0, format!("{spec}: training-issue markers missing from the vocabulary"));

        let mut config = ExperimentConfig::new(features, ClassifierKind::Rf);
        config.smote = true;
        config.tune = Some(2);
        config.seed = 7;
        let outcome = run_prediction_experiment::<f64>(&ds, spec, &config, &norm, None).unwrap();
        for provenance in &outcome.provenance {
            v.check(
                provenance.is_disjoint(&outcome.test_issues) && provenance.is_subset(&split.train_issues),
                format!("{spec}: pipeline encoder saw test-window issues"),
            );
        }

        let label_set: Vec<String> = split.train.iter().map(|l| l.label.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let x = encoders.encode_links(&split.train, &table).unwrap();
        let y: Vec<usize> = split.train.iter().map(|l| label_set.binary_search(&l.label).unwrap()).collect();
        let smote_spec = ClassifierSpec::defaults(ClassifierKind::Rf, true, 7);
        for (train, validation) in validation_splits(ClassifierKind::Rf, &y, 7).unwrap() {
            let outcome = evaluate_split(&smote_spec, &x, &y, &label_set, &train, &validation).unwrap();
            let held: BTreeSet<usize> = validation.iter().copied().collect();
            v.check(
                outcome.fitted_inputs.is_disjoint(&held),
                format!("{spec}: validation rows reached SMOTE output"),
            );
        }
        let (_, origin) = TrainedClassifier::train_traced(&smote_spec, &x, &y, label_set.clone()).unwrap();
        synthetic += origin.iter().filter(|o| matches!(o, RowOrigin::Synthetic { .. })).count();
        v.check(
            origin.iter().flat_map(|o| o.inputs()).all(|i| i < split.train.len()),
            format!("{spec}: SMOTE output drew on non-training rows"),
        );
    }
    v.check(synthetic > 0, "SMOTE produced no synthetic rows");
    v.note(format!("leakage checks on both splits, {synthetic} synthetic rows"));
    let elapsed = Duration::from_secs_f64(pass.sixty.seconds + pass.eighty.seconds) + start.elapsed();
    v.finish_with(elapsed);
}

#[test]
fn repeated_runs_are_identical() {
    let _guard = serial();
    let first = first_pass();
    let mut v = Verdict::new(9, "determinism", 1200);
    let second = end_to_end_pass();
    for (name, a, b) in [
        ("dataset", &first.dataset, &second.dataset),
        ("shuffled dataset", &first.control_dataset, &second.control_dataset),
        ("recover report", &first.recover.bytes, &second.recover.bytes),
        ("control report", &first.control.bytes, &second.control.bytes),
        ("60-20 report", &first.sixty.bytes, &second.sixty.bytes),
        ("80-20 report", &first.eighty.bytes, &second.eighty.bytes),
    ] {
        v.check(a == b, format!("{name} differs"));
    }
    v.note("datasets and four reports byte-identical");
    v.finish();
}

fn toy_params(seed: u64) -> EmbeddingParams {
    EmbeddingParams {
        dims: 16,
        epochs: 5,
        window: 3,
        negatives: 5,
        min_count: 1,
        learning_rate: 0.05,
        bucket_count: 4096,
        min_n: 3,
        max_n: 6,
        seed,
        workers: 1,
    }
}

#[test]
fn embedding_sanity() {
    let _guard = serial();
    let mut v = Verdict::new(10, "embedding sanity", 120);
    let sentences = corpus_sentences(TOY_CORPUS, &NormalizationConfig::empty());
    // (anchor, same-context token, unrelated token)
    let probes = [
        ("king", "queen", "kernel"),
        ("cache", "buffer", "castle"),
        ("thread", "cpu", "crown"),
        ("palace", "castle", "socket"),
    ];
    let mut good = 0;
    for seed in 0..100 {
        let model: EmbeddingModel<f64> = train_embeddings(&sentences, &toy_params(seed)).unwrap();
        let vec = |w: &str| model.word_vector(w).unwrap();
        if probes
            .iter()
            .all(|(a, same, other)| cosine(&vec(a), &vec(same)) > cosine(&vec(a), &vec(other)))
        {
            good += 1;
        }
    }
    v.check(good >= 95, format!("{good}/100 runs separate the contexts"));

    let base: EmbeddingModel<f64> = train_embeddings(&sentences, &toy_params(1)).unwrap();
    let issues = vec![TokenizedIssue {
        id: "T-1".into(),
        summary_tokens: tokens("king castle newword"),
        description_tokens: tokens("cache kernel"),
    }];
    let params = FinetuneParams {
        epochs: 0,
        ..Default::default()
    };
    v.check(finetune_embeddings(&base, &issues, &params) == base, "zero-epoch fine-tuning changed the model");
    v.note(format!("{good}/100 runs separate the contexts; zero-epoch fine-tuning is a no-op"));
    v.finish();
}
