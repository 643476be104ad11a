//! Subword skip-gram embeddings with negative sampling.
//!
//! A word is represented by the mean of its own input row and the rows of its
//! hashed character n-grams (taken from `<word>`, lengths `min_n..=max_n`).
//! Training is single-threaded and fully determined by the seed unless
//! `workers > 1`, in which case sentence shards are trained on copies and
//! averaged after every epoch.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::dot;
use crate::scalar::Scalar;
use crate::textprep::TokenizedIssue;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub dims: usize,
    pub epochs: usize,
    pub window: usize,
    pub negatives: usize,
    pub min_count: usize,
    pub learning_rate: f64,
    pub bucket_count: usize,
    pub min_n: usize,
    pub max_n: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        EmbeddingParams {
            dims: 300,
            epochs: 5,
            window: 5,
            negatives: 5,
            min_count: 5,
            learning_rate: 0.05,
            bucket_count: 2_000_000,
            min_n: 3,
            max_n: 6,
            seed: 1,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"), from = "StoredEmbedding<T>")]
pub struct EmbeddingModel<T: Scalar> {
    dims: usize,
    min_n: usize,
    max_n: usize,
    bucket_count: usize,
    words: Vec<String>,
    counts: Vec<u64>,
    word_input: Vec<T>,
    bucket_input: Vec<T>,
    output: Vec<T>,
    fitted_on: BTreeSet<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    #[serde(skip)]
    subwords: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct StoredEmbedding<T: Scalar> {
    dims: usize,
    min_n: usize,
    max_n: usize,
    bucket_count: usize,
    words: Vec<String>,
    counts: Vec<u64>,
    word_input: Vec<T>,
    bucket_input: Vec<T>,
    output: Vec<T>,
    fitted_on: BTreeSet<String>,
}

impl<T: Scalar> From<StoredEmbedding<T>> for EmbeddingModel<T> {
    fn from(s: StoredEmbedding<T>) -> Self {
        let mut m = EmbeddingModel {
            dims: s.dims,
            min_n: s.min_n,
            max_n: s.max_n,
            bucket_count: s.bucket_count,
            words: s.words,
            counts: s.counts,
            word_input: s.word_input,
            bucket_input: s.bucket_input,
            output: s.output,
            fitted_on: s.fitted_on,
            index: HashMap::new(),
            subwords: Vec::new(),
        };
        m.rebuild_lookup();
        m
    }
}

/// 32-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 2_166_136_261;
    for &b in bytes {
        h ^= b as u32;
        h = h.wrapping_mul(16_777_619);
    }
    h
}

/// Character n-grams of `<word>`, excluding the bracketed word itself.
pub fn char_ngrams(word: &str, min_n: usize, max_n: usize) -> Vec<String> {
    let chars: Vec<char> = format!("<{word}>").chars().collect();
    let mut out = Vec::new();
    for n in min_n..=max_n {
        if n == 0 || n > chars.len() {
            continue;
        }
        for start in 0..=chars.len() - n {
            if n == chars.len() {
                continue;
            }
            out.push(chars[start..start + n].iter().collect());
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x > 30.0 {
        1.0
    } else if x < -30.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

fn init_rows<T: Scalar>(n: usize, dims: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let bound = 1.0 / dims as f64;
    (0..n * dims)
        .map(|_| T::of(rng.gen_range(-bound..bound)))
        .collect()
}

/// Cumulative unigram^0.75 weights for negative sampling.
struct NegativeSampler {
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c.max(1) as f64).powf(0.75);
                acc
            })
            .collect();
        NegativeSampler { cumulative }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let r = rng.gen::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= r)
            .min(self.cumulative.len() - 1)
    }
}

struct Schedule {
    base_lr: f64,
    total_steps: usize,
    done: usize,
}

impl Schedule {
    fn lr(&self) -> f64 {
        let progress = self.done as f64 / self.total_steps.max(1) as f64;
        (self.base_lr * (1.0 - progress)).max(self.base_lr * 1e-4)
    }
}

impl<T: Scalar> EmbeddingModel<T> {
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn vocabulary_size(&self) -> usize {
        self.words.len()
    }

    pub fn bucket_count(&self) -> usize {
        self.bucket_count
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Issue ids whose text was used for fine-tuning.
    pub fn fitted_on(&self) -> &BTreeSet<String> {
        &self.fitted_on
    }

    fn rebuild_lookup(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        self.subwords = (0..self.words.len()).map(|i| self.subword_rows(i)).collect();
    }

    fn subword_rows(&self, word: usize) -> Vec<usize> {
        if self.bucket_count == 0 {
            return Vec::new();
        }
        char_ngrams(&self.words[word], self.min_n, self.max_n)
            .iter()
            .map(|g| fnv1a(g.as_bytes()) as usize % self.bucket_count)
            .collect()
    }

    /// Composed vector of an in-vocabulary word.
    pub fn word_vector(&self, word: &str) -> Option<Vec<T>> {
        let &i = self.index.get(word)?;
        let mut h = vec![T::zero(); self.dims];
        self.hidden(i, &mut h);
        Some(h)
    }

    fn hidden(&self, word: usize, h: &mut [T]) {
        let d = self.dims;
        h.copy_from_slice(&self.word_input[word * d..(word + 1) * d]);
        let rows = &self.subwords[word];
        for &b in rows {
            for (hk, &v) in h.iter_mut().zip(&self.bucket_input[b * d..(b + 1) * d]) {
                *hk = *hk + v;
            }
        }
        let scale = T::one() / T::of_usize(1 + rows.len());
        for hk in h.iter_mut() {
            *hk = *hk * scale;
        }
    }

    /// Mean of the composed vectors of all in-vocabulary tokens; zero if none.
    pub fn encode_tokens<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<T> {
        let mut acc = vec![T::zero(); self.dims];
        let mut h = vec![T::zero(); self.dims];
        let mut n = 0usize;
        for t in tokens {
            if let Some(&i) = self.index.get(t) {
                self.hidden(i, &mut h);
                for (a, &v) in acc.iter_mut().zip(&h) {
                    *a = *a + v;
                }
                n += 1;
            }
        }
        if n > 0 {
            let inv = T::one() / T::of_usize(n);
            for a in acc.iter_mut() {
                *a = *a * inv;
            }
        }
        acc
    }

    pub fn encode_issue(&self, issue: &TokenizedIssue) -> Vec<T> {
        self.encode_tokens(issue.all_tokens())
    }

    /// Adds unseen words with fresh input rows and zero output rows. Known
    /// words only have their counts increased.
    pub fn extend_vocabulary<'a>(
        &mut self,
        tokens: impl IntoIterator<Item = &'a str>,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let mut added = 0;
        for t in tokens {
            match self.index.get(t) {
                Some(&i) => self.counts[i] += 1,
                None => {
                    let i = self.words.len();
                    self.words.push(t.to_string());
                    self.counts.push(1);
                    self.word_input.extend(init_rows::<T>(1, self.dims, rng));
                    self.output.extend(std::iter::repeat_n(T::zero(), self.dims));
                    self.index.insert(t.to_string(), i);
                    let rows = self.subword_rows(i);
                    self.subwords.push(rows);
                    added += 1;
                }
            }
        }
        added
    }

    /// One skip-gram step: pull `center` toward `context`, push it away from
    /// sampled negatives.
    fn update_pair(
        &mut self,
        center: usize,
        context: usize,
        negatives: usize,
        lr: f64,
        sampler: &NegativeSampler,
        rng: &mut ChaCha8Rng,
        h: &mut [T],
        grad: &mut [T],
    ) {
        let d = self.dims;
        self.hidden(center, h);
        grad.iter_mut().for_each(|g| *g = T::zero());
        let mut step = |target: usize, label: f64, out: &mut [T]| {
            let row = &mut out[target * d..(target + 1) * d];
            let score = sigmoid(dot(h, row).as_f64());
            let g = T::of(lr * (label - score));
            for k in 0..d {
                grad[k] = grad[k] + g * row[k];
                row[k] = row[k] + g * h[k];
            }
        };
        step(context, 1.0, &mut self.output);
        for _ in 0..negatives {
            let neg = sampler.sample(rng);
            if neg != context {
                step(neg, 0.0, &mut self.output);
            }
        }
        for k in 0..d {
            self.word_input[center * d + k] = self.word_input[center * d + k] + grad[k];
        }
        for &b in &self.subwords[center] {
            for k in 0..d {
                self.bucket_input[b * d + k] = self.bucket_input[b * d + k] + grad[k];
            }
        }
    }

    fn train_epoch(
        &mut self,
        sentences: &[Vec<usize>],
        window: usize,
        negatives: usize,
        schedule: &mut Schedule,
        sampler: &NegativeSampler,
        rng: &mut ChaCha8Rng,
    ) {
        let mut h = vec![T::zero(); self.dims];
        let mut grad = vec![T::zero(); self.dims];
        for sentence in sentences {
            for (i, &center) in sentence.iter().enumerate() {
                let lr = schedule.lr();
                let reach = rng.gen_range(1..=window);
                let lo = i.saturating_sub(reach);
                let hi = (i + reach).min(sentence.len() - 1);
                for (j, &context) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if j != i {
                        self.update_pair(center, context, negatives, lr, sampler, rng, &mut h, &mut grad);
                    }
                }
                schedule.done += 1;
            }
        }
    }

    fn run_training(
        &mut self,
        sentences: &[Vec<usize>],
        epochs: usize,
        window: usize,
        negatives: usize,
        learning_rate: f64,
        workers: usize,
        rng: &mut ChaCha8Rng,
    ) {
        let tokens: usize = sentences.iter().map(Vec::len).sum();
        let sampler = NegativeSampler::new(&self.counts);
        let mut schedule = Schedule {
            base_lr: learning_rate,
            total_steps: tokens * epochs,
            done: 0,
        };
        let workers = workers.max(1).min(sentences.len().max(1));
        for _ in 0..epochs {
            if workers == 1 {
                self.train_epoch(sentences, window, negatives, &mut schedule, &sampler, rng);
                continue;
            }
            let shard_len = sentences.len().div_ceil(workers);
            let seeds: Vec<u64> = (0..workers).map(|_| rng.gen()).collect();
            let start = schedule.done;
            let replicas: Vec<EmbeddingModel<T>> = std::thread::scope(|s| {
                let handles: Vec<_> = sentences
                    .chunks(shard_len)
                    .zip(&seeds)
                    .map(|(shard, &seed)| {
                        let mut replica = self.clone();
                        let sampler = &sampler;
                        let mut sched = Schedule {
                            base_lr: learning_rate,
                            total_steps: tokens * epochs,
                            done: start,
                        };
                        s.spawn(move || {
                            let mut r = ChaCha8Rng::seed_from_u64(seed);
                            replica.train_epoch(shard, window, negatives, &mut sched, sampler, &mut r);
                            replica
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("embedding worker panicked")).collect()
            });
            self.average_from(&replicas);
            schedule.done += sentences.iter().map(Vec::len).sum::<usize>();
        }
    }

    fn average_from(&mut self, replicas: &[EmbeddingModel<T>]) {
        let inv = T::one() / T::of_usize(replicas.len());
        let avg = |pick: fn(&EmbeddingModel<T>) -> &Vec<T>, dst: &mut Vec<T>| {
            for (k, v) in dst.iter_mut().enumerate() {
                *v = replicas.iter().map(|r| pick(r)[k]).sum::<T>() * inv;
            }
        };
        avg(|m| &m.word_input, &mut self.word_input);
        avg(|m| &m.bucket_input, &mut self.bucket_input);
        avg(|m| &m.output, &mut self.output);
    }

    fn ids_of(&self, sentences: &[Vec<String>]) -> Vec<Vec<usize>> {
        sentences
            .iter()
            .map(|s| s.iter().filter_map(|t| self.index.get(t).copied()).collect::<Vec<_>>())
            .filter(|s| s.len() > 1)
            .collect()
    }

    /// Writes composed vectors in word2vec text format.
    pub fn save_text(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(w, "{} {}", self.words.len(), self.dims)?;
            for word in &self.words {
                let v = self.word_vector(word).expect("vocabulary word");
                write!(w, "{word}")?;
                for x in v {
                    write!(w, " {}", x.as_f64())?;
                }
                writeln!(w)?;
            }
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    /// Reads word2vec text format. The loaded model has no subword buckets;
    /// every word's input row is its stored vector.
    pub fn load_text(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let bad = |line: usize, msg: &str| Error::Parse {
            offset: line,
            message: format!("embedding file line {line}: {msg}"),
        };
        let header = lines
            .next()
            .ok_or_else(|| bad(1, "missing header"))?
            .map_err(|e| Error::io(path, e))?;
        let mut head = header.split_whitespace().map(str::parse::<usize>);
        let (Some(Ok(vocab)), Some(Ok(dims)), None) = (head.next(), head.next(), head.next()) else {
            return Err(bad(1, "header must be `<vocab> <dims>`"));
        };
        let mut words = Vec::with_capacity(vocab);
        let mut word_input = Vec::with_capacity(vocab * dims);
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ').filter(|p| !p.is_empty());
            let word = parts.next().ok_or_else(|| bad(n + 2, "missing token"))?;
            let values: Vec<T> = parts
                .map(|p| p.parse::<f64>().map(T::of))
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(n + 2, "non-numeric component"))?;
            if values.len() != dims {
                return Err(bad(n + 2, &format!("expected {dims} components, got {}", values.len())));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(bad(n + 2, "non-finite component"));
            }
            words.push(word.to_string());
            word_input.extend(values);
        }
        if words.len() != vocab {
            log::warn!("embedding header announces {vocab} words, file has {}", words.len());
        }
        let n = words.len();
        let mut m = EmbeddingModel {
            dims,
            min_n: 3,
            max_n: 6,
            bucket_count: 0,
            counts: vec![1; n],
            words,
            word_input,
            bucket_input: Vec::new(),
            output: vec![T::zero(); n * dims],
            fitted_on: BTreeSet::new(),
            index: HashMap::new(),
            subwords: Vec::new(),
        };
        m.rebuild_lookup();
        Ok(m)
    }

    /// Builds a model directly from word vectors, without subwords.
    pub fn from_word_vectors(dims: usize, vectors: Vec<(String, Vec<T>)>) -> Result<Self> {
        let mut words = Vec::new();
        let mut word_input = Vec::new();
        for (w, v) in vectors {
            if v.len() != dims {
                return Err(Error::WidthMismatch {
                    expected: dims,
                    actual: v.len(),
                });
            }
            words.push(w);
            word_input.extend(v);
        }
        let n = words.len();
        let mut m = EmbeddingModel {
            dims,
            min_n: 3,
            max_n: 6,
            bucket_count: 0,
            counts: vec![1; n],
            words,
            word_input,
            bucket_input: Vec::new(),
            output: vec![T::zero(); n * dims],
            fitted_on: BTreeSet::new(),
            index: HashMap::new(),
            subwords: Vec::new(),
        };
        m.rebuild_lookup();
        Ok(m)
    }

    pub fn all_finite(&self) -> bool {
        self.word_input
            .iter()
            .chain(&self.bucket_input)
            .chain(&self.output)
            .all(|v| v.is_finite())
    }
}

/// Trains subword skip-gram embeddings on normalized token sentences.
pub fn train_embeddings<T: Scalar>(
    sentences: &[Vec<String>],
    params: &EmbeddingParams,
) -> Result<EmbeddingModel<T>> {
    if params.dims < 2 {
        return Err(Error::invalid("embedding dims must be at least 2"));
    }
    if params.window == 0 || params.min_n == 0 || params.min_n > params.max_n {
        return Err(Error::invalid("window and n-gram range must be positive and ordered"));
    }
    let total: usize = sentences.iter().map(Vec::len).sum();
    if total < params.window + 1 {
        return Err(Error::CorpusTooSmall {
            tokens: total,
            window: params.window,
        });
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for t in sentences.iter().flatten() {
        *freq.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut vocab: Vec<(&str, u64)> = freq
        .into_iter()
        .filter(|&(_, c)| c as usize >= params.min_count)
        .collect();
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = vocab.len();
    let d = params.dims;
    let mut model = EmbeddingModel {
        dims: d,
        min_n: params.min_n,
        max_n: params.max_n,
        bucket_count: params.bucket_count,
        words: vocab.iter().map(|v| v.0.to_string()).collect(),
        counts: vocab.iter().map(|v| v.1).collect(),
        word_input: init_rows(n, d, &mut rng),
        bucket_input: init_rows(params.bucket_count, d, &mut rng),
        output: vec![T::zero(); n * d],
        fitted_on: BTreeSet::new(),
        index: HashMap::new(),
        subwords: Vec::new(),
    };
    model.rebuild_lookup();
    let ids = model.ids_of(sentences);
    model.run_training(
        &ids,
        params.epochs,
        params.window,
        params.negatives,
        params.learning_rate,
        params.workers,
        &mut rng,
    );
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneParams {
    pub epochs: usize,
    pub window: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FinetuneParams {
    fn default() -> Self {
        FinetuneParams {
            epochs: 1,
            window: 5,
            negatives: 5,
            learning_rate: 0.05,
            seed: 1,
        }
    }
}

/// Continues the skip-gram objective on issue text (summary then
/// description per issue), adding unseen tokens to the vocabulary. Zero
/// epochs returns the model untouched.
pub fn finetune_embeddings<T: Scalar>(
    model: &EmbeddingModel<T>,
    issues: &[TokenizedIssue],
    params: &FinetuneParams,
) -> EmbeddingModel<T> {
    let mut tuned = model.clone();
    if params.epochs == 0 {
        return tuned;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let streams: Vec<Vec<String>> = issues
        .iter()
        .map(|i| i.all_tokens().map(str::to_string).collect())
        .collect();
    tuned.extend_vocabulary(streams.iter().flatten().map(String::as_str), &mut rng);
    tuned.fitted_on.extend(issues.iter().map(|i| i.id.clone()));
    let ids = tuned.ids_of(&streams);
    tuned.run_training(
        &ids,
        params.epochs,
        params.window.max(1),
        params.negatives,
        params.learning_rate,
        1,
        &mut rng,
    );
    tuned
}

pub fn encode_issue_embedding<T: Scalar>(model: &EmbeddingModel<T>, issue: &TokenizedIssue) -> Vec<T> {
    model.encode_issue(issue)
}

pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let na = dot(a, a).as_f64().sqrt();
    let nb = dot(b, b).as_f64().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b).as_f64() / (na * nb)
}
