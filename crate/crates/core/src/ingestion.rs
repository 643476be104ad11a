//! Raw issue acquisition: paginated REST search, exported dumps, and
//! collapsing per-issue link descriptors into canonical outward links.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{parse_timestamp, Issue, IssueLink, ProjectDataset};
use crate::error::{Error, Result};
use crate::link_types::LinkTypeRegistry;

const SEARCH_FIELDS: &str = "summary,description,issuetype,status,created,assignee,reporter,issuelinks";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JiraSourceConfig {
    pub base_url: String,
    pub project_key: String,
    #[serde(default, skip_serializing)]
    pub auth_token: Option<String>,
    pub page_size: usize,
    /// Seconds.
    pub request_timeout: u64,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
    /// Upper bound on page requests in flight.
    pub concurrency: usize,
}

impl JiraSourceConfig {
    pub fn new(base_url: impl Into<String>, project_key: impl Into<String>) -> Self {
        JiraSourceConfig {
            base_url: base_url.into(),
            project_key: project_key.into(),
            auth_token: None,
            page_size: 100,
            request_timeout: 30,
            max_retries: 3,
            backoff_ms: 500,
            concurrency: 4,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.page_size == 0 {
            return Err(Error::invalid("page_size must be at least 1"));
        }
        Ok(())
    }
}

/// One issue document as returned by the tracker API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RawIssueRecord(pub Value);

impl RawIssueRecord {
    pub fn key(&self) -> Option<&str> {
        self.0
            .get("key")
            .or_else(|| self.0.get("id"))
            .and_then(Value::as_str)
    }

    fn field(&self, name: &str) -> Option<&Value> {
        self.0
            .get("fields")
            .and_then(|f| f.get(name))
            .or_else(|| self.0.get(name))
            .filter(|v| !v.is_null())
    }

    fn text_field(&self, name: &str) -> String {
        self.field(name)
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string()
    }

    /// Named sub-object such as `issuetype` or `status`; also accepts a bare string.
    fn named_field(&self, name: &str) -> Option<String> {
        let v = self.field(name)?;
        if let Some(s) = v.as_str() {
            return Some(s.to_string());
        }
        ["name", "key", "accountId", "displayName"]
            .iter()
            .find_map(|k| v.get(k).and_then(Value::as_str))
            .map(str::to_string)
    }
}

#[derive(Debug, Deserialize)]
struct SearchPage {
    #[serde(rename = "startAt", default)]
    start_at: usize,
    total: usize,
    issues: Vec<RawIssueRecord>,
}

fn agent(config: &JiraSourceConfig) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(config.request_timeout)))
        .build()
        .into()
}

fn fetch_page(agent: &ureq::Agent, config: &JiraSourceConfig, start_at: usize) -> Result<SearchPage> {
    let url = format!("{}/rest/api/2/search", config.base_url.trim_end_matches('/'));
    let jql = format!("project={}", config.project_key);
    let mut attempt = 0u32;
    loop {
        let mut req = agent
            .get(&url)
            .query("jql", &jql)
            .query("startAt", start_at.to_string())
            .query("maxResults", config.page_size.to_string())
            .query("fields", SEARCH_FIELDS);
        if let Some(token) = &config.auth_token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let transient = match req.call() {
            Ok(mut resp) => {
                let body = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| Error::SourceUnavailable(e.to_string()))?;
                return serde_json::from_str::<SearchPage>(&body).map_err(|e| Error::Protocol {
                    offset: start_at,
                    message: e.to_string(),
                });
            }
            Err(ureq::Error::StatusCode(code @ (401 | 403))) => {
                return Err(Error::Auth { status: code });
            }
            Err(ureq::Error::StatusCode(code)) if code >= 500 || code == 429 => {
                format!("HTTP {code}")
            }
            Err(ureq::Error::StatusCode(code)) => {
                return Err(Error::Protocol {
                    offset: start_at,
                    message: format!("unexpected HTTP {code}"),
                })
            }
            Err(e) => e.to_string(),
        };
        if attempt >= config.max_retries {
            return Err(Error::SourceUnavailable(format!(
                "{transient} after {attempt} retries"
            )));
        }
        let delay = config.backoff_ms.saturating_mul(1 << attempt.min(16));
        attempt += 1;
        log::warn!("page at {start_at}: {transient}; retry {attempt} in {delay} ms");
        thread::sleep(Duration::from_millis(delay));
    }
}

/// Fetches every issue of the configured project through the paginated
/// search endpoint. The first page fixes the total; later pages are fetched
/// by up to `concurrency` workers and reassembled in offset order.
pub fn fetch_project(config: &JiraSourceConfig) -> Result<Vec<RawIssueRecord>> {
    config.validate()?;
    let agent = agent(config);
    let first = fetch_page(&agent, config, 0)?;
    let total = first.total;
    let mut pages: BTreeMap<usize, Vec<RawIssueRecord>> = BTreeMap::new();
    pages.insert(first.start_at, first.issues);

    let offsets: Vec<usize> = (config.page_size..total).step_by(config.page_size).collect();
    let workers = config.concurrency.max(1);
    for chunk in offsets.chunks(workers) {
        let results: Vec<(usize, Result<SearchPage>)> = thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&offset| {
                    let agent = &agent;
                    s.spawn(move || (offset, fetch_page(agent, config, offset)))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("page worker panicked"))
                .collect()
        });
        for (offset, page) in results {
            let page = page?;
            if page.issues.is_empty() {
                return Err(Error::Protocol {
                    offset,
                    message: format!("empty page before reported total {total}"),
                });
            }
            pages.insert(offset, page.issues);
        }
    }
    Ok(pages.into_values().flatten().collect())
}

pub(crate) fn parse_error(bytes: &[u8], err: &serde_json::Error) -> Error {
    Error::Parse {
        offset: byte_offset(bytes, err.line(), err.column()),
        message: err.to_string(),
    }
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start = bytes
        .split_inclusive(|&b| b == b'\n')
        .take(line - 1)
        .map(<[u8]>::len)
        .sum::<usize>();
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

/// Reads an exported dump: either a bare array of issue documents or a
/// search response object with an `issues` array.
pub fn load_dump(path: &Path) -> Result<Vec<RawIssueRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_dump(&bytes)
}

pub fn parse_dump(bytes: &[u8]) -> Result<Vec<RawIssueRecord>> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| parse_error(bytes, &e))?;
    let items = match value {
        Value::Array(items) => items,
        Value::Object(mut obj) => match obj.remove("issues") {
            Some(Value::Array(items)) => items,
            _ => return Err(Error::Parse {
                offset: 0,
                message: "expected an array of issues or an object with an `issues` array".into(),
            }),
        },
        _ => {
            return Err(Error::Parse {
                offset: 0,
                message: "expected an array of issues".into(),
            })
        }
    };
    Ok(items.into_iter().map(RawIssueRecord).collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: usize,
    pub skipped_records: usize,
    pub descriptors: usize,
    pub external_dropped: usize,
    pub duplicates_collapsed: usize,
    pub disagreements: usize,
}

struct Descriptor {
    source: String,
    target: String,
    label: String,
    from_outward_record: bool,
}

fn descriptors_of(
    record: &RawIssueRecord,
    key: &str,
    link_types: &LinkTypeRegistry,
) -> Vec<Descriptor> {
    let Some(links) = record.field("issuelinks").and_then(Value::as_array) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for entry in links {
        let ty = entry.get("type");
        let text = |k: &str| ty.and_then(|t| t.get(k)).and_then(Value::as_str);
        let other_key = |side: &str| {
            entry
                .get(side)
                .and_then(|o| o.get("key").or_else(|| o.get("id")))
                .and_then(Value::as_str)
                .map(str::to_string)
        };
        if let Some(other) = other_key("outwardIssue") {
            let label = text("outward")
                .or_else(|| text("name"))
                .map(|l| link_types.canonical(l).to_string());
            if let Some(label) = label {
                out.push(Descriptor {
                    source: key.to_string(),
                    target: other,
                    label,
                    from_outward_record: true,
                });
            }
        } else if let Some(other) = other_key("inwardIssue") {
            // The outward text of the type names the link, whichever side reports it.
            let label = text("outward")
                .map(str::to_string)
                .or_else(|| text("inward").map(|l| link_types.canonical(l).to_string()))
                .or_else(|| text("name").map(str::to_string));
            if let Some(label) = label {
                out.push(Descriptor {
                    source: other,
                    target: key.to_string(),
                    label,
                    from_outward_record: false,
                });
            }
        }
    }
    out
}

fn issue_from_record(record: &RawIssueRecord, key: &str, project: &str) -> Option<Issue> {
    let created = record
        .field("created")
        .and_then(Value::as_str)
        .and_then(parse_timestamp);
    let Some(created) = created else {
        log::warn!("{key}: missing or unparseable creation time, record skipped");
        return None;
    };
    Some(Issue {
        id: key.to_string(),
        summary: record.text_field("summary"),
        description: record.text_field("description"),
        issue_type: record.named_field("issuetype").unwrap_or_default(),
        status: record.named_field("status").unwrap_or_default(),
        created,
        assignee: record.named_field("assignee"),
        reporter: record.named_field("reporter").unwrap_or_default(),
        project: project.to_string(),
    })
}

/// Builds a dataset from one project's raw records. Every logical link is
/// kept once, outward-directed under its outward label. Links leaving the
/// record set are dropped and counted. When both endpoint records describe a
/// pair differently, the outward record wins.
pub fn canonicalize_links(
    project: &str,
    records: &[RawIssueRecord],
    link_types: &LinkTypeRegistry,
) -> (ProjectDataset, IngestReport) {
    let mut report = IngestReport {
        records: records.len(),
        ..Default::default()
    };
    let mut issues = Vec::new();
    let mut keyed = Vec::new();
    let mut seen_keys = HashSet::new();
    for record in records {
        let Some(key) = record.key() else {
            report.skipped_records += 1;
            continue;
        };
        if !seen_keys.insert(key.to_string()) {
            report.skipped_records += 1;
            continue;
        }
        match issue_from_record(record, key, project) {
            Some(issue) => {
                issues.push(issue);
                keyed.push((key, record));
            }
            None => report.skipped_records += 1,
        }
    }
    let known: HashSet<&str> = issues.iter().map(|i| i.id.as_str()).collect();

    let mut descriptors: Vec<Descriptor> = keyed
        .iter()
        .flat_map(|(key, record)| descriptors_of(record, key, link_types))
        .collect();
    report.descriptors = descriptors.len();
    // Outward-side descriptors are authoritative, so they go first.
    descriptors.sort_by_key(|d| !d.from_outward_record);

    let mut links: Vec<IssueLink> = Vec::new();
    let mut triples = HashSet::new();
    let mut outward_pairs: HashMap<(String, String), Vec<String>> = HashMap::new();
    for d in descriptors {
        if d.source == d.target {
            continue;
        }
        if !known.contains(d.source.as_str()) || !known.contains(d.target.as_str()) {
            report.external_dropped += 1;
            continue;
        }
        let link = IssueLink::new(d.source, d.target, d.label);
        if triples.contains(&link) {
            report.duplicates_collapsed += 1;
            continue;
        }
        let pair = (link.source.clone(), link.target.clone());
        if d.from_outward_record {
            outward_pairs
                .entry(pair)
                .or_default()
                .push(link.label.clone());
        } else if let Some(labels) = outward_pairs.get(&pair) {
            report.disagreements += 1;
            log::warn!(
                "{} -> {}: inward record says {:?}, outward record says {:?}; keeping outward",
                pair.0,
                pair.1,
                link.label,
                labels
            );
            continue;
        }
        triples.insert(link.clone());
        links.push(link);
    }
    let dataset = ProjectDataset {
        project: project.to_string(),
        issues,
        links,
    };
    (dataset, report)
}

pub fn save_dataset(dataset: &ProjectDataset, path: &Path) -> Result<()> {
    dataset.save(path)
}

pub fn load_dataset(path: &Path) -> Result<ProjectDataset> {
    ProjectDataset::load(path)
}
