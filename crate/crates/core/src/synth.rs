//! Synthetic projects with a planted labelling rule.
//!
//! Issues get a type, a type-specific word, three topic words and some
//! filler text. Each issue after the first links to one earlier issue.
//! Some issues restate a very recent issue, copying its topic words. A
//! link's label follows [`PlantedRule`]: three or more shared summary words
//! give the second label, otherwise the type pair picks one of the rest.

use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Issue, IssueLink, ProjectDataset};
use crate::error::{Error, Result};

pub const ISSUE_TYPES: [&str; 5] = ["Bug", "Task", "Improvement", "New Feature", "Sub-task"];

const TYPE_WORDS: [[&str; 4]; 5] = [
    ["crash", "failure", "exception", "regression"],
    ["chore", "cleanup", "upgrade", "migration"],
    ["faster", "refine", "polish", "optimize"],
    ["introduce", "support", "capability", "proposal"],
    ["step", "subitem", "piece", "portion"],
];

const TOPIC_STEMS: [&str; 40] = [
    "parser", "planner", "scheduler", "storage", "cache", "index", "socket", "thread", "buffer", "queue", "metric",
    "schema", "table", "column", "partition", "shuffle", "reducer", "mapper", "codec", "compressor", "router",
    "gateway", "session", "token", "ledger", "journal", "replica", "snapshot", "bucket", "cursor", "lexer",
    "optimizer", "executor", "catalog", "manifest", "widget", "dialog", "chart", "layout", "renderer",
];

const TOPIC_SUFFIXES: [&str; 5] = ["", "alpha", "beta", "gamma", "delta"];

const FILLER: [&str; 12] = [
    "observed", "while", "running", "cluster", "nightly", "build", "users", "report", "production", "staging",
    "version", "module",
];

const ASSIGNEES: [&str; 8] = ["ana", "bo", "chen", "dara", "eli", "fay", "gus", "hana"];
const REPORTERS: [&str; 10] = ["ivo", "jun", "kai", "lea", "max", "nia", "oli", "pia", "quin", "rae"];

fn topic_vocabulary() -> Vec<String> {
    let mut v = Vec::new();
    for suffix in TOPIC_SUFFIXES {
        for stem in TOPIC_STEMS {
            v.push(format!("{stem}{suffix}"));
        }
    }
    v
}

/// The labelling rule: shared summary words (case-insensitive, distinct)
/// at or above `overlap_threshold` give `labels[1]`. Otherwise
/// `type_rank[type_a][type_b]` indexes, modulo their count, the labels other
/// than `labels[1]`. Unknown types count as the first type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRule {
    pub overlap_threshold: usize,
    pub type_rank: [[usize; 5]; 5],
}

impl Default for PlantedRule {
    /// Skewed towards `labels[0]`: twelve of the 25 type pairs map to it.
    fn default() -> Self {
        PlantedRule {
            overlap_threshold: 3,
            type_rank: [
                [0, 1, 0, 2, 0],
                [1, 0, 3, 0, 2],
                [0, 2, 0, 1, 3],
                [3, 0, 1, 0, 0],
                [0, 1, 2, 0, 0],
            ],
        }
    }
}

fn summary_words(issue: &Issue) -> BTreeSet<String> {
    issue.summary.split_whitespace().map(str::to_lowercase).collect()
}

fn type_index(issue: &Issue) -> usize {
    ISSUE_TYPES.iter().position(|t| *t == issue.issue_type).unwrap_or(0)
}

impl PlantedRule {
    pub fn label_for<'l>(&self, a: &Issue, b: &Issue, labels: &'l [String]) -> &'l str {
        let shared = summary_words(a).intersection(&summary_words(b)).count();
        if labels.len() >= 2 && shared >= self.overlap_threshold {
            return &labels[1];
        }
        let others: Vec<&String> = labels.iter().enumerate().filter(|(i, _)| *i != 1).map(|(_, l)| l).collect();
        let rank = self.type_rank[type_index(a)][type_index(b)];
        others[rank % others.len()]
    }

    /// Labels the rule assigns to each link of `dataset`.
    pub fn apply(&self, dataset: &ProjectDataset, labels: &[String]) -> Result<Vec<String>> {
        let index = dataset.issue_index();
        dataset
            .links
            .iter()
            .map(|l| {
                let a = index.get(l.source.as_str()).ok_or_else(|| Error::invalid(format!("unknown issue {}", l.source)))?;
                let b = index.get(l.target.as_str()).ok_or_else(|| Error::invalid(format!("unknown issue {}", l.target)))?;
                Ok(self.label_for(&dataset.issues[*a], &dataset.issues[*b], labels).to_string())
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_issues: usize,
    pub labels: Vec<String>,
    pub rule: PlantedRule,
    /// Probability of replacing a link's label by a uniformly drawn one.
    pub noise: f64,
    pub seed: u64,
    /// Share of issues that restate one of the three preceding issues.
    pub restatement_rate: f64,
    pub project: String,
}

impl SynthConfig {
    pub fn new(n_issues: usize, labels: Vec<String>, noise: f64, seed: u64) -> Self {
        SynthConfig {
            n_issues,
            labels,
            rule: PlantedRule::default(),
            noise,
            seed,
            restatement_rate: 0.15,
            project: "SYN".into(),
        }
    }
}

/// Five common outward labels, most frequent under the default rule first.
pub fn default_labels() -> Vec<String> {
    ["relates to", "duplicates", "blocks", "depends upon", "incorporates"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<ProjectDataset> {
    if config.labels.len() < 2 {
        return Err(Error::invalid("synthetic data needs at least two labels"));
    }
    if !(0.0..=1.0).contains(&config.noise) {
        return Err(Error::invalid("noise must be in [0, 1]"));
    }
    if !(0.0..=1.0).contains(&config.restatement_rate) {
        return Err(Error::invalid("restatement rate must be in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let topics = topic_vocabulary();
    let start = NaiveDate::from_ymd_opt(2020, 1, 1)
        .expect("valid date")
        .and_hms_opt(0, 0, 0)
        .expect("valid time")
        .and_utc();
    let mut issues: Vec<Issue> = Vec::with_capacity(config.n_issues);
    let mut topic_sets: Vec<Vec<String>> = Vec::with_capacity(config.n_issues);
    let mut targets: Vec<Option<usize>> = Vec::with_capacity(config.n_issues);
    for i in 0..config.n_issues {
        let t = rng.gen_range(0..ISSUE_TYPES.len());
        let restates = i >= 1 && rng.gen_bool(config.restatement_rate);
        let target = if restates {
            Some(i - rng.gen_range(1..=i.min(3)))
        } else if i >= 5 && rng.gen_bool(0.9) {
            Some(i - rng.gen_range(5..=i.min(60)))
        } else {
            None
        };
        let own_topics: Vec<String> = match target {
            Some(j) if restates => topic_sets[j].clone(),
            _ => topics.choose_multiple(&mut rng, 3).cloned().collect(),
        };
        let type_word = TYPE_WORDS[t].choose(&mut rng).expect("non-empty");
        let summary = format!("{type_word} {}", own_topics.join(" "));
        let mut description: Vec<&str> = (0..4).map(|_| *FILLER.choose(&mut rng).expect("non-empty")).collect();
        description.push(TYPE_WORDS[t].choose(&mut rng).expect("non-empty"));
        description.extend(own_topics.iter().map(String::as_str));
        description.push(topics.choose(&mut rng).expect("non-empty"));
        issues.push(Issue {
            id: format!("{}-{}", config.project, i + 1),
            summary,
            description: description.join(" "),
            issue_type: ISSUE_TYPES[t].to_string(),
            status: if rng.gen_bool(0.5) { "Open" } else { "Resolved" }.to_string(),
            created: start + Duration::days(i as i64) + Duration::minutes(rng.gen_range(0..600)),
            assignee: rng
                .gen_bool(0.8)
                .then(|| ASSIGNEES.choose(&mut rng).expect("non-empty").to_string()),
            reporter: REPORTERS.choose(&mut rng).expect("non-empty").to_string(),
            project: config.project.clone(),
        });
        topic_sets.push(own_topics);
        targets.push(target);
    }
    let mut links = Vec::new();
    for (i, target) in targets.iter().enumerate() {
        let Some(j) = *target else { continue };
        let mut label = config.rule.label_for(&issues[i], &issues[j], &config.labels).to_string();
        if rng.gen_bool(config.noise) {
            label = config.labels.choose(&mut rng).expect("non-empty").clone();
        }
        links.push(IssueLink::new(&issues[i].id, &issues[j].id, &label));
    }
    Ok(ProjectDataset {
        project: config.project.clone(),
        issues,
        links,
    })
}

/// Control dataset: the same links with their labels permuted.
pub fn shuffle_labels(dataset: &ProjectDataset, seed: u64) -> ProjectDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<String> = dataset.links.iter().map(|l| l.label.clone()).collect();
    labels.shuffle(&mut rng);
    let mut out = dataset.clone();
    for (link, label) in out.links.iter_mut().zip(labels) {
        link.label = label;
    }
    out
}
