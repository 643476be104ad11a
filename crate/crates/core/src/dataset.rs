//! Issues, labeled links, and per-project datasets.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::link_types::LinkTypeRegistry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub id: String,
    pub summary: String,
    #[serde(default)]
    pub description: String,
    #[serde(rename = "type")]
    pub issue_type: String,
    pub status: String,
    #[serde(serialize_with = "serialize_ts", deserialize_with = "deserialize_ts")]
    pub created: DateTime<Utc>,
    #[serde(default)]
    pub assignee: Option<String>,
    pub reporter: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub project: String,
}

/// Directed within-project link, stored under its outward label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IssueLink {
    pub source: String,
    pub target: String,
    pub label: String,
}

impl IssueLink {
    pub fn new(source: impl Into<String>, target: impl Into<String>, label: impl Into<String>) -> Self {
        IssueLink {
            source: source.into(),
            target: target.into(),
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectDataset {
    pub project: String,
    pub issues: Vec<Issue>,
    pub links: Vec<IssueLink>,
}

/// Parses the timestamp shapes seen in tracker exports: RFC 3339, the Jira
/// `2013-05-01T10:20:30.000+0000` form, naive date-times (taken as UTC) and
/// bare dates.
pub fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    let text = text.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f%z", "%Y-%m-%dT%H:%M:%S%z", "%Y-%m-%d %H:%M:%S%.f%z"] {
        if let Ok(t) = DateTime::parse_from_str(text, fmt) {
            return Some(t.with_timezone(&Utc));
        }
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(t.and_utc());
        }
    }
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc())
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn serialize_ts<S: Serializer>(t: &DateTime<Utc>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_timestamp(t))
}

fn deserialize_ts<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DateTime<Utc>, D::Error> {
    let text = String::deserialize(d)?;
    parse_timestamp(&text)
        .ok_or_else(|| serde::de::Error::custom(format!("unparseable timestamp {text:?}")))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateIssueId { id: String },
    DanglingEndpoint { link: IssueLink, missing: String },
    SelfLink { link: IssueLink },
    DuplicateLink { link: IssueLink },
    InwardLabel { link: IssueLink },
    CreatedAfterSnapshot { id: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |l: &IssueLink| format!("{} -[{}]-> {}", l.source, l.label, l.target);
        match self {
            Violation::DuplicateIssueId { id } => write!(f, "duplicate issue id {id}"),
            Violation::DanglingEndpoint { link, missing } => {
                write!(f, "link {} references missing issue {missing}", show(link))
            }
            Violation::SelfLink { link } => write!(f, "self-link {}", show(link)),
            Violation::DuplicateLink { link } => write!(f, "duplicate link {}", show(link)),
            Violation::InwardLabel { link } => write!(f, "inward-form label on {}", show(link)),
            Violation::CreatedAfterSnapshot { id } => {
                write!(f, "issue {id} created after the snapshot time")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every dataset invariant against the current time as snapshot.
pub fn validate_dataset(dataset: &ProjectDataset) -> ValidationReport {
    validate_dataset_at(dataset, Utc::now(), &LinkTypeRegistry::default())
}

pub fn validate_dataset_at(
    dataset: &ProjectDataset,
    snapshot: DateTime<Utc>,
    link_types: &LinkTypeRegistry,
) -> ValidationReport {
    let mut violations = Vec::new();
    let mut ids = HashSet::new();
    for issue in &dataset.issues {
        if !ids.insert(issue.id.as_str()) {
            violations.push(Violation::DuplicateIssueId {
                id: issue.id.clone(),
            });
        }
        if issue.created > snapshot {
            violations.push(Violation::CreatedAfterSnapshot {
                id: issue.id.clone(),
            });
        }
    }
    let mut seen = HashSet::new();
    for link in &dataset.links {
        if link.source == link.target {
            violations.push(Violation::SelfLink { link: link.clone() });
        }
        for end in [&link.source, &link.target] {
            if !ids.contains(end.as_str()) {
                violations.push(Violation::DanglingEndpoint {
                    link: link.clone(),
                    missing: end.clone(),
                });
            }
        }
        if link_types.is_inward_only(&link.label) {
            violations.push(Violation::InwardLabel { link: link.clone() });
        }
        if !seen.insert(link) {
            violations.push(Violation::DuplicateLink { link: link.clone() });
        }
    }
    ValidationReport { violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelFilterPolicy {
    pub min_fraction: f64,
    pub min_count: usize,
}

impl Default for LabelFilterPolicy {
    fn default() -> Self {
        LabelFilterPolicy {
            min_fraction: 0.01,
            min_count: 20,
        }
    }
}

impl LabelFilterPolicy {
    pub fn new(min_fraction: f64, min_count: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&min_fraction) {
            return Err(Error::invalid(format!(
                "min_fraction {min_fraction} outside [0, 1]"
            )));
        }
        Ok(LabelFilterPolicy {
            min_fraction,
            min_count,
        })
    }

    /// A label survives only when it meets both thresholds.
    pub fn keeps(&self, count: usize, total: usize) -> bool {
        let fraction = if total == 0 {
            0.0
        } else {
            count as f64 / total as f64
        };
        count >= self.min_count && fraction >= self.min_fraction
    }
}

/// Drops every link whose label falls below either threshold of `policy`.
pub fn filter_labels(dataset: &ProjectDataset, policy: &LabelFilterPolicy) -> ProjectDataset {
    let counts = label_counts(&dataset.links);
    let total = dataset.links.len();
    let kept: HashSet<&str> = counts
        .iter()
        .filter(|(_, &c)| policy.keeps(c, total))
        .map(|(l, _)| l.as_str())
        .collect();
    ProjectDataset {
        project: dataset.project.clone(),
        issues: dataset.issues.clone(),
        links: dataset
            .links
            .iter()
            .filter(|l| kept.contains(l.label.as_str()))
            .cloned()
            .collect(),
    }
}

/// Removes labels with fewer than `min_count` links, returning the removed
/// labels with their counts.
pub fn drop_sparse_labels(
    dataset: &ProjectDataset,
    min_count: usize,
) -> (ProjectDataset, Vec<(String, usize)>) {
    let counts = label_counts(&dataset.links);
    let dropped: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c < min_count)
        .collect();
    let dropped_set: HashSet<&str> = dropped.iter().map(|(l, _)| l.as_str()).collect();
    let ds = ProjectDataset {
        project: dataset.project.clone(),
        issues: dataset.issues.clone(),
        links: dataset
            .links
            .iter()
            .filter(|l| !dropped_set.contains(l.label.as_str()))
            .cloned()
            .collect(),
    };
    (ds, dropped)
}

pub fn label_counts(links: &[IssueLink]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for link in links {
        *counts.entry(link.label.clone()).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelShare {
    pub count: usize,
    pub fraction: f64,
}

pub fn label_distribution(dataset: &ProjectDataset) -> BTreeMap<String, LabelShare> {
    shares(label_counts(&dataset.links))
}

fn shares(counts: BTreeMap<String, usize>) -> BTreeMap<String, LabelShare> {
    let total: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(label, count)| {
            let fraction = count as f64 / total as f64;
            (label, LabelShare { count, fraction })
        })
        .collect()
}

/// Fraction of issues that are an endpoint of at least one link.
pub fn linked_issue_ratio(dataset: &ProjectDataset) -> Result<f64> {
    if dataset.issues.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let linked = linked_issue_ids(dataset);
    let n = dataset
        .issues
        .iter()
        .filter(|i| linked.contains(i.id.as_str()))
        .count();
    Ok(n as f64 / dataset.issues.len() as f64)
}

fn linked_issue_ids(dataset: &ProjectDataset) -> HashSet<&str> {
    dataset
        .links
        .iter()
        .flat_map(|l| [l.source.as_str(), l.target.as_str()])
        .collect()
}

/// Issue-type breakdown of the issues that carry at least one link.
pub fn linked_issue_types(dataset: &ProjectDataset) -> BTreeMap<String, LabelShare> {
    let linked = linked_issue_ids(dataset);
    let mut counts = BTreeMap::new();
    for issue in dataset.issues.iter().filter(|i| linked.contains(i.id.as_str())) {
        *counts.entry(issue.issue_type.clone()).or_insert(0) += 1;
    }
    shares(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub projects: BTreeMap<String, f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Linked-issue ratio across several projects. Projects without issues are skipped.
pub fn corpus_ratio_summary(datasets: &[ProjectDataset]) -> Result<RatioSummary> {
    let mut projects = BTreeMap::new();
    for ds in datasets {
        if let Ok(r) = linked_issue_ratio(ds) {
            projects.insert(ds.project.clone(), r);
        }
    }
    if projects.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = projects.len() as f64;
    let mean = projects.values().sum::<f64>() / n;
    let var = projects.values().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(RatioSummary {
        projects,
        mean,
        std: var.sqrt(),
    })
}

impl ProjectDataset {
    pub fn new(project: impl Into<String>) -> Self {
        ProjectDataset {
            project: project.into(),
            issues: Vec::new(),
            links: Vec::new(),
        }
    }

    pub fn issue_index(&self) -> HashMap<&str, usize> {
        self.issues
            .iter()
            .enumerate()
            .map(|(i, issue)| (issue.id.as_str(), i))
            .collect()
    }

    pub fn issue(&self, id: &str) -> Option<&Issue> {
        self.issues.iter().find(|i| i.id == id)
    }

    pub fn labels(&self) -> Vec<String> {
        label_counts(&self.links).into_keys().collect()
    }

    /// Drops repeated (source, target, label) triples, keeping the first.
    /// Returns how many were removed.
    pub fn dedup_links(&mut self) -> usize {
        let mut seen = HashSet::new();
        let before = self.links.len();
        self.links.retain(|l| seen.insert(l.clone()));
        let removed = before - self.links.len();
        if removed > 0 {
            log::warn!(
                "{}: dropped {removed} duplicate link triple(s)",
                self.project
            );
        }
        removed
    }

    pub fn with_links(&self, links: Vec<IssueLink>) -> ProjectDataset {
        ProjectDataset {
            project: self.project.clone(),
            issues: self.issues.clone(),
            links,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_bytes(&bytes)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let mut ds: ProjectDataset =
            serde_json::from_slice(bytes).map_err(|e| crate::ingestion::parse_error(bytes, &e))?;
        for issue in &mut ds.issues {
            if issue.project.is_empty() {
                issue.project = ds.project.clone();
            }
        }
        Ok(ds)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
