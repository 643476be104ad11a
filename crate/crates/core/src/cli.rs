//! Command-line front end.
//!
//! Flags resolve as command line over `--config` file over defaults. The
//! config file is a flat JSON object keyed by flag name; its entries are
//! spliced in ahead of the user's arguments, and later occurrences of a
//! flag override earlier ones.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dataset::{
    drop_sparse_labels, filter_labels, label_distribution, linked_issue_ratio, linked_issue_types, validate_dataset,
    LabelFilterPolicy, ProjectDataset,
};
use crate::encoders::embedding::{train_embeddings, EmbeddingModel, EmbeddingParams, FinetuneParams};
use crate::encoders::{EmbeddingSource, LinkFeatureConfig, TextEncoderKind};
use crate::error::Error;
use crate::experiments::{
    majority_weighted_f1, run_prediction_experiment, run_recovery_experiment, suggest_label, EvalReport,
    ExperimentConfig, ExperimentOutcome, ModelBundle, ReportFormat, TimeSplitSpec, MIN_LABEL_INSTANCES,
};
use crate::ingestion::{canonicalize_links, fetch_project, load_dump, JiraSourceConfig};
use crate::learners::ClassifierKind;
use crate::link_types::LinkTypeRegistry;
use crate::synth::{default_labels, generate_synthetic, shuffle_labels, SynthConfig};
use crate::textprep::{corpus_sentences, preprocess_issue, NormalizationConfig};
use crate::tuning::write_trial_log;

#[derive(Debug, Parser)]
#[command(name = "linklab", version, about = "Recover and predict issue-tracker link labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fetch a project from a Jira server (or read an exported dump) and
    /// write a canonical dataset.
    #[command(args_override_self = true)]
    Ingest(IngestArgs),
    /// Parse and validate a dataset file.
    #[command(args_override_self = true)]
    Load(LoadArgs),
    /// Label distribution and linked-issue ratio.
    #[command(args_override_self = true)]
    Stats(StatsArgs),
    /// Train subword skip-gram embeddings on plain-text corpora.
    #[command(args_override_self = true)]
    TrainEmbeddings(TrainEmbeddingsArgs),
    /// Cross-validated label recovery.
    #[command(args_override_self = true)]
    Recover(ExperimentArgs),
    /// Train on older issues, predict labels of links from newer ones.
    #[command(args_override_self = true)]
    PredictFuture(PredictArgs),
    /// Rank labels for a link between two issues with a saved model.
    #[command(args_override_self = true)]
    Suggest(SuggestArgs),
    /// Generate a synthetic dataset with a planted labelling rule.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
    Text,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
            Format::Text => ReportFormat::Text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum EncoderArg {
    Tfidf,
    Embedding,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModelArg {
    Lr,
    Rf,
    Nn,
    Zeror,
}

impl From<ModelArg> for ClassifierKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Lr => ClassifierKind::Lr,
            ModelArg::Rf => ClassifierKind::Rf,
            ModelArg::Nn => ClassifierKind::Nn,
            ModelArg::Zeror => ClassifierKind::Zeror,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
enum SplitArg {
    #[value(name = "60-20")]
    #[serde(rename = "60-20")]
    SixtyTwenty,
    #[value(name = "80-20")]
    #[serde(rename = "80-20")]
    EightyTwenty,
}

#[derive(Debug, Clone, Args, Serialize)]
struct CommonArgs {
    /// Flat JSON file of flag values.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// Leave the run timestamp out of reports.
    #[arg(long)]
    #[serde(skip)]
    no_timestamp: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
struct TextArgs {
    /// Stopword list, one word per line.
    #[arg(long, value_name = "FILE")]
    stopwords: Option<PathBuf>,
    /// Lemma table, `token<TAB>lemma` per line.
    #[arg(long, value_name = "FILE")]
    lemmas: Option<PathBuf>,
}

impl TextArgs {
    fn normalization(&self) -> Result<NormalizationConfig, Failure> {
        Ok(NormalizationConfig::from_files(
            self.stopwords.as_deref(),
            self.lemmas.as_deref(),
        )?)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
struct FilterArgs {
    #[arg(long, default_value_t = 20)]
    min_label_count: usize,
    #[arg(long, default_value_t = 0.01)]
    min_label_fraction: f64,
}

impl FilterArgs {
    fn policy(&self) -> Result<LabelFilterPolicy, Failure> {
        LabelFilterPolicy::new(self.min_label_fraction, self.min_label_count).map_err(|e| Failure::Usage(e.to_string()))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
struct IngestArgs {
    /// Jira base URL, e.g. https://issues.example.org
    #[arg(long, required_unless_present = "dump")]
    url: Option<String>,
    /// Project key.
    #[arg(long)]
    project: String,
    /// Exported search results (JSON array or `{"issues": [...]}`).
    #[arg(long, value_name = "FILE", conflicts_with = "url")]
    dump: Option<PathBuf>,
    /// Extra `outward<TAB>inward` link type pairs.
    #[arg(long, value_name = "FILE")]
    link_types: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    page_size: usize,
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct LoadArgs {
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct StatsArgs {
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    filter: FilterArgs,
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct TrainEmbeddingsArgs {
    /// Plain-text corpus, one sentence per line. Repeatable.
    #[arg(long, value_name = "FILE", required = true)]
    corpus: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    dims: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 5)]
    min_count: usize,
    #[arg(long, default_value_t = 0.05)]
    learning_rate: f64,
    #[arg(long, default_value_t = 2_000_000)]
    buckets: usize,
    #[command(flatten)]
    #[serde(flatten)]
    text: TextArgs,
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct ExperimentArgs {
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = EncoderArg::Tfidf)]
    encoder: EncoderArg,
    /// Pre-trained vectors in word2vec text format.
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// Fine-tuning epochs on training issue text.
    #[arg(long, default_value_t = 1)]
    finetune_epochs: usize,
    /// Add metadata features.
    #[arg(long)]
    meta: bool,
    #[arg(long, value_enum, default_value_t = ModelArg::Lr)]
    model: ModelArg,
    #[arg(long)]
    smote: bool,
    /// Random-search trials; defaults are used when absent.
    #[arg(long, value_name = "N")]
    tune: Option<usize>,
    /// Fit encoders once on all links instead of per training split.
    #[arg(long)]
    fit_encoders_once: bool,
    /// Also train on every link and save a model bundle.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    save_model: Option<PathBuf>,
    /// Write the random-search trials as JSON lines.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    trial_log: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    filter: FilterArgs,
    #[command(flatten)]
    #[serde(flatten)]
    text: TextArgs,
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct PredictArgs {
    #[arg(long, value_enum, default_value_t = SplitArg::EightyTwenty)]
    split: SplitArg,
    #[command(flatten)]
    #[serde(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SuggestArgs {
    /// Model bundle written by `recover --save-model`.
    #[arg(long, value_name = "FILE")]
    bundle: PathBuf,
    /// Dataset holding both issues.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    #[arg(long)]
    source: String,
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 3)]
    top_k: usize,
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 1500)]
    issues: usize,
    /// A label count, or a comma-separated label list.
    #[arg(long, default_value = "5")]
    labels: String,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Permute the labels of the generated links.
    #[arg(long)]
    shuffle_labels: bool,
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
}

#[derive(Debug)]
enum Failure {
    /// Already reported by the argument parser.
    Clap,
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

/// Expands `--config FILE` into flags placed right after the subcommand.
fn splice_config(argv: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = argv.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let sub_pos = argv
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 1)
        .ok_or_else(|| Failure::Usage("--config needs a subcommand".into()))?;
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Runtime(Error::io(&path, e)))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(Failure::Usage(format!("config {} must be a JSON object", path.display())));
    };
    let sub_name = argv[sub_pos].to_string_lossy().to_string();
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(&sub_name)
        .ok_or_else(|| Failure::Usage(format!("unknown subcommand `{sub_name}`")))?;
    let known: Vec<String> = sub.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect();
    let mut injected = Vec::new();
    for (key, v) in map {
        let flag = key.replace('_', "-");
        if flag == "config" {
            continue;
        }
        if !known.contains(&flag) {
            let anywhere = cmd
                .get_subcommands()
                .any(|s| s.get_arguments().any(|a| a.get_long() == Some(flag.as_str())));
            if anywhere {
                continue;
            }
            return Err(Failure::Usage(format!("config {}: unknown key `{key}`", path.display())));
        }
        match v {
            Value::Bool(true) => injected.push(OsString::from(format!("--{flag}"))),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => injected.push(OsString::from(format!("--{flag}={s}"))),
            Value::Number(n) => injected.push(OsString::from(format!("--{flag}={n}"))),
            Value::Array(items) => {
                for item in items {
                    let s = match item {
                        Value::String(s) => s,
                        other => other.to_string(),
                    };
                    injected.push(OsString::from(format!("--{flag}={s}")));
                }
            }
            Value::Object(_) => {
                return Err(Failure::Usage(format!("config key `{key}` must not be an object")));
            }
        }
    }
    let mut out = argv[..=sub_pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[sub_pos + 1..]);
    Ok(out)
}

fn emit(common: &CommonArgs, text: &str) -> Result<(), Failure> {
    match &common.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Runtime(Error::io(path, e))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Failure::Runtime(Error::io("<stdout>", e)))
        }
    }
}

fn emit_json(common: &CommonArgs, value: &impl Serialize) -> Result<(), Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    s.push('\n');
    emit(common, &s)
}

fn stamp(common: &CommonArgs) -> Option<String> {
    (!common.no_timestamp).then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

fn ingest(args: &IngestArgs) -> Result<(), Failure> {
    let mut registry = LinkTypeRegistry::default();
    if let Some(p) = &args.link_types {
        registry.extend_from_file(p)?;
    }
    let records = match (&args.dump, &args.url) {
        (Some(dump), _) => load_dump(dump)?,
        (None, Some(url)) => {
            let mut cfg = JiraSourceConfig::new(url.clone(), args.project.clone());
            cfg.page_size = args.page_size;
            cfg.concurrency = args.common.jobs.max(1);
            cfg.auth_token = std::env::var("LINKLAB_TOKEN").ok().filter(|t| !t.is_empty());
            fetch_project(&cfg)?
        }
        (None, None) => return Err(Failure::Usage("either --url or --dump is required".into())),
    };
    let (dataset, report) = canonicalize_links(&args.project, &records, &registry);
    info!("{} issues, {} links", dataset.issues.len(), dataset.links.len());
    match &args.common.out {
        Some(path) => dataset.save(path)?,
        None => emit(&args.common, &dataset.to_json()?)?,
    }
    eprintln!("{}", serde_json::to_string(&report).map_err(Error::from)?);
    Ok(())
}

fn load(args: &LoadArgs) -> Result<(), Failure> {
    let ds = ProjectDataset::load(&args.data)?;
    let report = validate_dataset(&ds);
    let violations: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
    let summary = json!({
        "project": ds.project,
        "issues": ds.issues.len(),
        "links": ds.links.len(),
        "valid": report.is_valid(),
        "violations": violations,
    });
    match args.common.format {
        Format::Text => {
            let mut s = format!("{}: {} issues, {} links\n", ds.project, ds.issues.len(), ds.links.len());
            for v in &violations {
                s.push_str(&format!("violation: {v}\n"));
            }
            emit(&args.common, &s)?;
        }
        _ => emit_json(&args.common, &summary)?,
    }
    if report.is_valid() {
        Ok(())
    } else {
        Err(Failure::Runtime(Error::invalid(format!(
            "{} dataset violation(s)",
            violations.len()
        ))))
    }
}

fn stats(args: &StatsArgs) -> Result<(), Failure> {
    let policy = args.filter.policy()?;
    let ds = ProjectDataset::load(&args.data)?;
    let filtered = filter_labels(&ds, &policy);
    let distribution = label_distribution(&ds);
    let filtered_distribution = label_distribution(&filtered);
    let counts: Vec<usize> = filtered_distribution.values().map(|s| s.count).collect();
    let ratio = linked_issue_ratio(&ds)?;
    match args.common.format {
        Format::Json => emit_json(
            &args.common,
            &json!({
                "project": ds.project,
                "issues": ds.issues.len(),
                "links": ds.links.len(),
                "linked_issue_ratio": ratio,
                "labels": distribution,
                "filtered_labels": filtered_distribution,
                "filtered_links": filtered.links.len(),
                "majority_weighted_f1": majority_weighted_f1(&counts),
                "linked_issue_types": linked_issue_types(&ds),
            }),
        ),
        Format::Csv => {
            let mut s = String::from("label,count,fraction,kept\n");
            for (label, share) in &distribution {
                let quoted = if label.contains(',') || label.contains('"') {
                    format!("\"{}\"", label.replace('"', "\"\""))
                } else {
                    label.clone()
                };
                s.push_str(&format!(
                    "{quoted},{},{},{}\n",
                    share.count,
                    share.fraction,
                    filtered_distribution.contains_key(label)
                ));
            }
            emit(&args.common, &s)
        }
        Format::Text => {
            let mut s = format!(
                "{}: {} issues, {} links, linked-issue ratio {:.4}\n",
                ds.project,
                ds.issues.len(),
                ds.links.len(),
                ratio
            );
            for (label, share) in &distribution {
                let mark = if filtered_distribution.contains_key(label) { "" } else { " (filtered)" };
                s.push_str(&format!("{label:<24} {:>7} {:>8.4}{mark}\n", share.count, share.fraction));
            }
            emit(&args.common, &s)
        }
    }
}

fn train_embeddings_cmd(args: &TrainEmbeddingsArgs) -> Result<(), Failure> {
    let out = args
        .common
        .out
        .as_ref()
        .ok_or_else(|| Failure::Usage("train-embeddings needs --out".into()))?;
    let normalization = args.text.normalization()?;
    let mut sentences = Vec::new();
    for path in &args.corpus {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        sentences.extend(corpus_sentences(&text, &normalization));
    }
    let params = EmbeddingParams {
        dims: args.dims,
        epochs: args.epochs,
        window: args.window,
        negatives: args.negatives,
        min_count: args.min_count,
        learning_rate: args.learning_rate,
        bucket_count: args.buckets,
        seed: args.common.seed,
        workers: args.common.jobs.max(1),
        ..Default::default()
    };
    let model = train_embeddings::<f64>(&sentences, &params)?;
    model.save_text(out)?;
    info!("{} words, {} dims", model.vocabulary_size(), model.dims());
    Ok(())
}

struct Prepared {
    dataset: ProjectDataset,
    config: ExperimentConfig,
    normalization: NormalizationConfig,
    embeddings: Option<EmbeddingModel<f64>>,
}

fn prepare(args: &ExperimentArgs, drop_below_folds: bool) -> Result<Prepared, Failure> {
    let policy = args.filter.policy()?;
    let text_encoder = match args.encoder {
        EncoderArg::Tfidf => TextEncoderKind::Tfidf,
        EncoderArg::Embedding => TextEncoderKind::Proj,
        EncoderArg::None => TextEncoderKind::None,
    };
    let features = LinkFeatureConfig::new(text_encoder, args.meta).map_err(|e| Failure::Usage(e.to_string()))?;
    if text_encoder.is_embedding() && args.embeddings.is_none() {
        return Err(Failure::Usage("--encoder embedding needs --embeddings FILE".into()));
    }
    if args.tune == Some(0) {
        return Err(Failure::Usage("--tune needs at least one trial".into()));
    }
    let raw = ProjectDataset::load(&args.data)?;
    let mut dataset = filter_labels(&raw, &policy);
    let removed = raw.links.len() - dataset.links.len();
    if removed > 0 {
        info!("label filter removed {removed} links");
    }
    if drop_below_folds {
        let (kept, dropped) = drop_sparse_labels(&dataset, MIN_LABEL_INSTANCES);
        for (label, count) in dropped {
            warn!("dropping label {label:?}: {count} links, at least {MIN_LABEL_INSTANCES} needed for cross-validation");
        }
        dataset = kept;
    }
    let embeddings = match &args.embeddings {
        Some(p) if text_encoder.is_embedding() => Some(EmbeddingModel::<f64>::load_text(p)?),
        _ => None,
    };
    let mut config = ExperimentConfig::new(features, args.model.into());
    config.smote = args.smote;
    config.tune = args.tune;
    config.seed = args.common.seed;
    config.fit_encoders_once = args.fit_encoders_once;
    config.jobs = args.common.jobs.max(1);
    Ok(Prepared {
        dataset,
        config,
        normalization: args.text.normalization()?,
        embeddings,
    })
}

fn finish_report(
    outcome: &ExperimentOutcome,
    resolved: &impl Serialize,
    args: &ExperimentArgs,
) -> Result<(), Failure> {
    let mut report: EvalReport = outcome.report.clone();
    report.config = serde_json::to_value(resolved).map_err(Error::from)?;
    report.timestamp = stamp(&args.common);
    emit(&args.common, &report.render(args.common.format.into())?)?;
    if let Some(path) = &args.trial_log {
        let mut buf = Vec::new();
        for trials in &outcome.trials {
            write_trial_log(&mut buf, trials)?;
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn source<'m>(prepared: &'m Prepared, args: &ExperimentArgs) -> Option<EmbeddingSource<'m, f64>> {
    prepared.embeddings.as_ref().map(|base| EmbeddingSource {
        base,
        finetune: FinetuneParams {
            epochs: args.finetune_epochs,
            seed: args.common.seed,
            ..Default::default()
        },
    })
}

fn recover(args: &ExperimentArgs) -> Result<(), Failure> {
    let prepared = prepare(args, true)?;
    let embeddings = source(&prepared, args);
    let outcome = run_recovery_experiment::<f64>(
        &prepared.dataset,
        &prepared.config,
        &prepared.normalization,
        embeddings.as_ref(),
    )?;
    finish_report(&outcome, args, args)?;
    if let Some(path) = &args.save_model {
        let (bundle, _) = ModelBundle::train(
            &prepared.dataset,
            &prepared.config,
            &prepared.normalization,
            embeddings.as_ref(),
        )?;
        bundle.save(path)?;
    }
    Ok(())
}

fn predict_future(args: &PredictArgs) -> Result<(), Failure> {
    let exp = &args.experiment;
    let prepared = prepare(exp, false)?;
    let embeddings = source(&prepared, exp);
    let spec = match args.split {
        SplitArg::SixtyTwenty => TimeSplitSpec::SIXTY_TWENTY,
        SplitArg::EightyTwenty => TimeSplitSpec::EIGHTY_TWENTY,
    };
    let outcome = run_prediction_experiment::<f64>(
        &prepared.dataset,
        spec,
        &prepared.config,
        &prepared.normalization,
        embeddings.as_ref(),
    )?;
    finish_report(&outcome, args, exp)?;
    if let Some(path) = &exp.save_model {
        let (bundle, _) = ModelBundle::train(
            &prepared.dataset,
            &prepared.config,
            &prepared.normalization,
            embeddings.as_ref(),
        )?;
        bundle.save(path)?;
    }
    Ok(())
}

fn suggest(args: &SuggestArgs) -> Result<(), Failure> {
    if args.top_k == 0 {
        return Err(Failure::Usage("--top-k must be at least 1".into()));
    }
    let bundle = ModelBundle::<f64>::load(&args.bundle)?;
    let ds = ProjectDataset::load(&args.data)?;
    let find = |id: &str| ds.issue(id).ok_or_else(|| Failure::Runtime(Error::invalid(format!("issue {id} not in {}", args.data.display()))));
    let a = find(&args.source)?;
    let b = find(&args.target)?;
    let ranked = suggest_label(&bundle, a, b, args.top_k)?;
    match args.common.format {
        Format::Json => {
            let rows: Vec<Value> = ranked.iter().map(|(l, p)| json!({"label": l, "probability": p})).collect();
            emit_json(&args.common, &rows)
        }
        Format::Csv => {
            let mut s = String::from("label,probability\n");
            for (l, p) in &ranked {
                s.push_str(&format!("\"{}\",{p}\n", l.replace('"', "\"\"")));
            }
            emit(&args.common, &s)
        }
        Format::Text => {
            let tokens = preprocess_issue(a, &bundle.normalization);
            let mut s = format!("{} -> {} ({} summary tokens)\n", a.id, b.id, tokens.summary_tokens.len());
            for (l, p) in &ranked {
                s.push_str(&format!("{p:.4}  {l}\n"));
            }
            emit(&args.common, &s)
        }
    }
}

fn synth_labels(spec: &str) -> Result<Vec<String>, Failure> {
    if let Ok(n) = spec.trim().parse::<usize>() {
        let mut labels = default_labels();
        let registry = LinkTypeRegistry::default();
        let mut extra: Vec<String> = registry
            .outward_labels()
            .map(str::to_string)
            .filter(|l| !labels.contains(l))
            .collect();
        extra.sort();
        labels.extend(extra);
        if n < 2 || n > labels.len() {
            return Err(Failure::Usage(format!("--labels count must be in 2..={}", labels.len())));
        }
        labels.truncate(n);
        return Ok(labels);
    }
    let labels: Vec<String> = spec.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if labels.len() < 2 {
        return Err(Failure::Usage("--labels needs at least two labels".into()));
    }
    Ok(labels)
}

fn synth(args: &SynthArgs) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&args.noise) {
        return Err(Failure::Usage("--noise must be in [0, 1]".into()));
    }
    let cfg = SynthConfig::new(args.issues, synth_labels(&args.labels)?, args.noise, args.common.seed);
    let mut ds = generate_synthetic(&cfg)?;
    if args.shuffle_labels {
        ds = shuffle_labels(&ds, args.common.seed.wrapping_add(1));
    }
    emit(&args.common, &ds.to_json()?)
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Load(a) => load(a),
        Command::Stats(a) => stats(a),
        Command::TrainEmbeddings(a) => train_embeddings_cmd(a),
        Command::Recover(a) => recover(a),
        Command::PredictFuture(a) => predict_future(a),
        Command::Suggest(a) => suggest(a),
        Command::Synth(a) => synth(a),
    }
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 2 on usage errors, 1 on runtime errors.
pub fn run<I, A>(argv: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString>,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let result = splice_config(argv).and_then(|argv| match Cli::try_parse_from(argv) {
        Ok(cli) => dispatch(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                Err(Failure::Clap)
            } else {
                Ok(())
            }
        }
    });
    match result {
        Err(Failure::Clap) => 2,
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

